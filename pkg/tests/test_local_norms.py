"""Coset and atom localized box norms against naive evaluation."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from qflab.errors import DegenerateContext
from qflab.factor import (
    DirectionTuple2,
    DirectionTuple3,
    QuadraticFactor,
    new_linear_factor,
    new_quadratic_factor,
)
from qflab.fpn_core import GroupVector
from qflab.local_norms import (
    LocalContext2,
    LocalContext3,
    local_u2_fourth_via_spectrum,
    local_u2_inner,
    local_u2_norm,
    local_u3_dominates_check,
    local_u3_inner,
    local_u3_inner_naive,
    local_u3_norm,
    support_triples_consistent,
)
from qflab.spectral import GroupFunction, u2_norm, u3_inner


def _random_f(p, n, seed, bounded=True):
    rng = np.random.default_rng(seed)
    N = p ** n
    vals = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    if bounded:
        vals = vals / np.maximum(np.abs(vals), 1.0)
        return GroupFunction(p, n, vals, one_bounded=True)
    return GroupFunction(p, n, vals)


def _mixed_factor():
    lin = new_linear_factor(3, 3, [(1, 0, 0)])
    return new_quadratic_factor(lin, [np.eye(3, dtype=np.int64)])


def _contexts(factor, limit):
    """First few nondegenerate directions, scanning labels in order."""
    width = factor.ell + factor.q
    labels = itertools.product(range(3), repeat=3 * width + 3 * factor.q)
    out = []
    for flat in labels:
        a1 = flat[:width]
        a2 = flat[width:2 * width]
        a3 = flat[2 * width:3 * width]
        rest = flat[3 * width:]
        b12, b13, b23 = rest[:factor.q], rest[factor.q:2 * factor.q], rest[2 * factor.q:]
        try:
            out.append(LocalContext3(
                factor, DirectionTuple3(3, a1, a2, a3, b12, b13, b23)))
        except DegenerateContext:
            continue
        if len(out) == limit:
            return out
    return out


def test_trivial_factor_reduces_to_global_norms():
    lin = new_linear_factor(3, 2, [])
    ctx2 = LocalContext2(lin, DirectionTuple2(3, (), ()))
    f = _random_f(3, 2, seed=1)
    assert local_u2_norm(ctx2, f) == pytest.approx(u2_norm(f), abs=1e-10)

    quad = new_quadratic_factor(lin, [])
    ctx3 = LocalContext3(quad, DirectionTuple3(3, (), (), (), (), (), ()))
    octuple = [_random_f(3, 2, seed=10 + k) for k in range(8)]
    assert local_u3_inner(ctx3, octuple) == pytest.approx(
        u3_inner(octuple), abs=1e-10)


def test_local_u2_inner_matches_explicit_loop():
    lin = new_linear_factor(3, 2, [(1, 2)])
    ctx = LocalContext2(lin, DirectionTuple2(3, (1,), (2,)))
    fs = [_random_f(3, 2, seed=20 + k, bounded=False) for k in range(4)]
    sp = lin.space
    total = 0.0 + 0.0j
    for x0 in ctx.xs:
        for x1 in ctx.xs:
            for y0 in ctx.ys:
                for y1 in ctx.ys:
                    total += (
                        fs[0].values[sp.add(x0, y0)]
                        * np.conj(fs[1].values[sp.add(x0, y1)])
                        * np.conj(fs[2].values[sp.add(x1, y0)])
                        * fs[3].values[sp.add(x1, y1)]
                    )
    expected = total / (ctx.xs.size ** 2 * ctx.ys.size ** 2)
    assert local_u2_inner(ctx, *fs) == pytest.approx(complex(expected), abs=1e-12)


def test_local_u2_fourth_matches_restricted_spectrum():
    lin = new_linear_factor(3, 3, [(1, 1, 0)])
    ctx = LocalContext2(lin, DirectionTuple2(3, (0,), (2,)))
    f = _random_f(3, 3, seed=3)
    fourth = local_u2_norm(ctx, f) ** 4
    assert fourth == pytest.approx(local_u2_fourth_via_spectrum(ctx, f), abs=1e-10)
    # any other shift in the target coset gives the same answer
    other = int(ctx.target_indices()[-1])
    z = GroupVector.from_index(3, 3, other)
    assert fourth == pytest.approx(local_u2_fourth_via_spectrum(ctx, f, z), abs=1e-10)


def test_degenerate_contexts_are_refused():
    # coset x1 = 0 never reaches form value 2, so the atom (0, 2) is empty
    factor = _mixed_factor_2d()
    with pytest.raises(DegenerateContext):
        LocalContext3(factor, DirectionTuple3(3, (0, 2), (0, 0), (0, 0),
                                              (0,), (0,), (0,)))
    # the zero form has no pairs at bilinear level 1
    flat = new_quadratic_factor(new_linear_factor(3, 1, []),
                                [np.zeros((1, 1), dtype=np.int64)])
    with pytest.raises(DegenerateContext):
        LocalContext3(flat, DirectionTuple3(3, (0,), (0,), (0,),
                                            (1,), (0,), (0,)))


def _mixed_factor_2d():
    lin = new_linear_factor(3, 2, [(1, 0)])
    return new_quadratic_factor(lin, [np.eye(2, dtype=np.int64)])


def test_local_u3_inner_matches_naive():
    factor = _mixed_factor()
    rng = np.random.default_rng(7)
    for ctx in _contexts(factor, limit=3):
        octuple = [_random_f(3, 3, seed=int(rng.integers(1 << 30))) for _ in range(8)]
        fast = local_u3_inner(ctx, octuple)
        slow = local_u3_inner_naive(ctx, octuple)
        assert fast == pytest.approx(slow, abs=1e-9)


def test_support_triples_land_in_the_target_atom():
    for ctx in _contexts(_mixed_factor(), limit=5):
        assert support_triples_consistent(ctx)


def test_inner_product_ignores_values_off_the_target_atom():
    ctx = _contexts(_mixed_factor(), limit=1)[0]
    f = _random_f(3, 3, seed=11)
    base = local_u3_inner(ctx, [f] * 8)
    mask = np.ones(27, dtype=bool)
    mask[ctx.target_indices()] = False
    noisy_vals = f.values.copy()
    noisy_vals[mask] += 5.0
    noisy = GroupFunction(3, 3, noisy_vals)
    assert local_u3_inner(ctx, [noisy] * 8) == pytest.approx(base, abs=1e-10)


def test_inner_product_is_linear_in_one_slot():
    ctx = _contexts(_mixed_factor(), limit=1)[0]
    octuple = [_random_f(3, 3, seed=30 + k) for k in range(8)]
    base = local_u3_inner(ctx, octuple)
    scaled = [octuple[0].scale(2.0 + 1.0j)] + octuple[1:]
    assert local_u3_inner(ctx, scaled) == pytest.approx(
        (2.0 + 1.0j) * base, abs=1e-10)
    # an odd-parity slot picks up the conjugate factor
    flipped = octuple[:1] + [octuple[1].scale(2.0 + 1.0j)] + octuple[2:]
    assert local_u3_inner(ctx, flipped) == pytest.approx(
        (2.0 - 1.0j) * base, abs=1e-10)


def test_local_norm_squares_are_nonnegative():
    factor = _mixed_factor()
    f = _random_f(3, 3, seed=41)
    for ctx in _contexts(factor, limit=4):
        assert local_u3_norm(ctx, f) >= 0.0


def test_local_u3_dominates_local_u2_on_linear_factors():
    lin = new_linear_factor(3, 3, [(1, 0, 0)])
    for seed in range(4):
        f = _random_f(3, 3, seed=50 + seed)
        for a1, a2, a3 in [((0,), (0,), (0,)), ((1,), (2,), (1,)), ((2,), (2,), (2,))]:
            u3val, u2val, margin = local_u3_dominates_check(lin, a1, a2, a3, f)
            assert margin >= -1e-9
            assert u3val >= 0.0 and u2val >= 0.0

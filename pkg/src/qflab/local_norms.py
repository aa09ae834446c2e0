"""Local U^2(d) and U^3(d) semi-norms, restricted Fourier analysis on cosets.

The local U^2 inner product averages the four-vertex product with x0, x1
confined to the coset L(a1) and y0, y1 to L(a2); every argument x + y then
lies in the single coset L(a1 + a2), so the value only sees f there.

The local U^3 inner product confines x's, y's, z's to three quadratic atoms
and reweights each of the twelve cross pairs by the characteristic measure
mu of a prescribed bilinear level set. All eight corner sums land in the
atom labeled sigma3(d) = a1 + a2 + a3 + 2(0|b12) + 2(0|b13) + 2(0|b23).
"""

from __future__ import annotations

import numpy as np

from .errors import CapExceeded, DegenerateContext, EmptyLevelSet
from .factor import (
    AtomLabel,
    DirectionTuple2,
    DirectionTuple3,
    LinearFactor,
    QuadraticFactor,
    sigma2,
    sigma3,
)
from .fpn_core import DEFAULT_TOL, GroupVector
from .spectral import (
    GroupFunction,
    SpectrumTable,
    _root_of_diagonal,
    fourier_transform,
)

TENSOR_CAP = 1 << 24  # member-tensor entry cap for local U^3 evaluation
NAIVE_CAP6 = 1 << 22  # term cap for the six-fold nested reference sum


class LocalContext2:
    """A linear factor with a pair of coset labels (a1, a2)."""

    def __init__(self, linear: LinearFactor, d: DirectionTuple2) -> None:
        if d.p != linear.p or len(d.a1) != linear.ell:
            raise ValueError("direction tuple does not match factor")
        self.linear = linear
        self.d = d
        self.xs = linear.coset_indices(d.a1)
        self.ys = linear.coset_indices(d.a2)
        self.sigma = sigma2(d)

    def target_indices(self) -> np.ndarray:
        return self.linear.coset_indices(self.sigma)

    def default_shift(self) -> GroupVector:
        """Canonical-index-least element of the target coset L(a1 + a2)."""
        idx = int(self.target_indices().min())
        return GroupVector.from_index(self.linear.p, self.linear.n, idx)


def local_u2_inner(ctx: LocalContext2, f00: GroupFunction, f01: GroupFunction,
                   f10: GroupFunction, f11: GroupFunction) -> complex:
    """E over x0,x1 in L(a1), y0,y1 in L(a2) of the twisted four-product."""
    sp = ctx.linear.space
    for g in (f00, f01, f10, f11):
        if (g.p, g.n) != (ctx.linear.p, ctx.linear.n):
            raise ValueError("function in wrong group")
    table = sp.sum_grid(ctx.xs, ctx.ys)  # table[x, y] = x + y
    s = ctx.xs.size
    m00 = f00.values[table]
    m01 = f01.values[table]
    m10 = f10.values[table]
    m11 = f11.values[table]
    fcorr = m00.T @ np.conj(m01) / s   # F[y0, y1] = E_x0 f00(x0+y0) conj f01(x0+y1)
    gcorr = np.conj(m10).T @ m11 / s
    return complex((fcorr * gcorr).mean())


def local_u2_norm(ctx: LocalContext2, f: GroupFunction, tol: float = DEFAULT_TOL) -> float:
    return _root_of_diagonal(local_u2_inner(ctx, f, f, f, f), 4, tol)


def restricted_fourier(f: GroupFunction, subgrp: LinearFactor, z: GroupVector) -> SpectrumTable:
    """Fourier transform of h -> f(z + h) on the subgroup L(0), relative to
    a fixed kernel basis; the spectrum lives on F_p^(n - l)."""
    from .fpn_core import space

    p, n = subgrp.p, subgrp.n
    if (f.p, f.n) != (p, n) or (z.p, z.n) != (p, n):
        raise ValueError("mismatched group")
    basis = subgrp.subgroup_basis()
    m = len(basis)
    sub = space(p, m)
    if m == 0:
        vals = np.array([f.values[z.index]])
        return fourier_transform(GroupFunction(p, 0, vals))
    bmat = np.array([b.coords for b in basis], dtype=np.int64)  # (m, n)
    coords = (sub.digits.astype(np.int64) @ bmat + np.array(z.coords, dtype=np.int64)) % p
    indices = coords @ subgrp.space.powers
    return fourier_transform(GroupFunction(p, m, f.values[indices]))


def local_u2_fourth_via_spectrum(ctx: LocalContext2, f: GroupFunction,
                                 z: GroupVector | None = None) -> float:
    """Sum of |fhat|^4 of the shifted restriction to the kernel coset; equals
    the fourth power of the local U^2 norm for any shift z in L(a1 + a2)."""
    if z is None:
        z = ctx.default_shift()
    spec = restricted_fourier(f, ctx.linear, z)
    return spec.l4_fourth()


class LocalContext3:
    """A quadratic factor with atom labels (a1, a2, a3) and bilinear labels
    (b12, b13, b23); caches member arrays and mu weight matrices.

    Degenerate when any referenced atom or level set is empty: the defining
    expectations divide by those sizes, so evaluation refuses.
    """

    def __init__(self, factor: QuadraticFactor, d: DirectionTuple3) -> None:
        if d.p != factor.p or len(d.a1) != factor.ell + factor.q or len(d.b12) != factor.q:
            raise ValueError("direction tuple does not match factor")
        self.factor = factor
        self.d = d
        self.xs = factor.atom_indices(d.a1)
        self.ys = factor.atom_indices(d.a2)
        self.zs = factor.atom_indices(d.a3)
        for name, arr in (("a1", self.xs), ("a2", self.ys), ("a3", self.zs)):
            if arr.size == 0:
                raise DegenerateContext(f"atom {name} = {getattr(d, name)} is empty")
        try:
            self.mu12 = self._weights(d.b12, self.xs, self.ys)
            self.mu13 = self._weights(d.b13, self.xs, self.zs)
            self.mu23 = self._weights(d.b23, self.ys, self.zs)
        except EmptyLevelSet as exc:
            raise DegenerateContext(str(exc)) from exc
        self.sigma: AtomLabel = sigma3(factor, d)

    def _weights(self, blabel: tuple[int, ...], rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        from .factor import mu_weight_matrix

        return mu_weight_matrix(self.factor, blabel, rows, cols)

    def target_indices(self) -> np.ndarray:
        return self.factor.atom_indices(self.sigma.values)


def _member_tensor(ctx: LocalContext3, g: GroupFunction) -> np.ndarray:
    """tensor[i, j, k] = g(x_i + y_j + z_k) over the three member arrays."""
    sp = ctx.factor.space
    if ctx.xs.size * ctx.ys.size * ctx.zs.size > TENSOR_CAP:
        raise CapExceeded("atom member tensor too large")
    return g.values[sp.sum_grid3(ctx.xs, ctx.ys, ctx.zs)]


def local_u3_inner(ctx: LocalContext3, octuple: list[GroupFunction]) -> complex:
    """The mu-weighted eight-vertex expectation over the three atoms.

    Factorized: for each (y0, y1) the two z-averages collapse to weighted
    matrix products over (x, z), and the remaining x0, x1 average is an
    elementwise contraction against the mu12 outer weights.
    """
    if len(octuple) != 8:
        raise ValueError("need eight functions in lexicographic eps order")
    for g in octuple:
        if (g.p, g.n) != (ctx.factor.p, ctx.factor.n):
            raise ValueError("function in wrong group")
    tensors: dict[int, np.ndarray] = {}
    for g in octuple:
        if id(g) not in tensors:
            tensors[id(g)] = _member_tensor(ctx, g)
    t000, t001, t010, t011, t100, t101, t110, t111 = (tensors[id(g)] for g in octuple)
    s1, s2, s3 = ctx.xs.size, ctx.ys.size, ctx.zs.size
    mu12, mu13, mu23 = ctx.mu12, ctx.mu13, ctx.mu23
    total = 0.0
    for j0 in range(s2):
        w0x0_base = t000[:, j0, :]
        w0x1_base = np.conj(t100[:, j0, :])
        w1x0_base = np.conj(t001[:, j0, :])
        w1x1_base = t101[:, j0, :]
        for j1 in range(s2):
            a0 = mu13 * w0x0_base * np.conj(t010[:, j1, :])
            b0 = mu13 * w0x1_base * t110[:, j1, :]
            a1 = mu13 * w1x0_base * t011[:, j1, :]
            b1 = mu13 * w1x1_base * np.conj(t111[:, j1, :])
            wz = mu23[j0] * mu23[j1]
            z0 = (a0 * wz) @ b0.T / s3
            z1 = (a1 * wz) @ b1.T / s3
            wx = mu12[:, j0] * mu12[:, j1]
            total = total + ((wx[:, None] * wx[None, :]) * z0 * z1).sum()
    return complex(total / (s1 * s1 * s2 * s2))


def local_u3_inner_naive(ctx: LocalContext3, octuple: list[GroupFunction]) -> complex:
    """Reference evaluation: the literal six-fold nested sum over atom
    members with all twelve mu factors formed term by term."""
    if len(octuple) != 8:
        raise ValueError("need eight functions in lexicographic eps order")
    s1, s2, s3 = ctx.xs.size, ctx.ys.size, ctx.zs.size
    if (s1 * s2 * s3) ** 2 > NAIVE_CAP6:
        raise CapExceeded("six-fold nested sum too large")
    tensors = [_member_tensor(ctx, g) for g in octuple]
    t000, t001, t010, t011, t100, t101, t110, t111 = tensors
    mu12, mu13, mu23 = ctx.mu12, ctx.mu13, ctx.mu23
    total = 0.0 + 0.0j
    for i0 in range(s1):
        for i1 in range(s1):
            for j0 in range(s2):
                for j1 in range(s2):
                    w_xy = mu12[i0, j0] * mu12[i0, j1] * mu12[i1, j0] * mu12[i1, j1]
                    if w_xy == 0.0:
                        continue
                    for k0 in range(s3):
                        wk0 = mu13[i0, k0] * mu13[i1, k0] * mu23[j0, k0] * mu23[j1, k0]
                        if wk0 == 0.0:
                            continue
                        face0 = (t000[i0, j0, k0] * np.conj(t010[i0, j1, k0])
                                 * np.conj(t100[i1, j0, k0]) * t110[i1, j1, k0])
                        for k1 in range(s3):
                            wk1 = mu13[i0, k1] * mu13[i1, k1] * mu23[j0, k1] * mu23[j1, k1]
                            if wk1 == 0.0:
                                continue
                            face1 = (np.conj(t001[i0, j0, k1]) * t011[i0, j1, k1]
                                     * t101[i1, j0, k1] * np.conj(t111[i1, j1, k1]))
                            total += w_xy * wk0 * wk1 * face0 * face1
    return complex(total / (s1 * s2 * s3) ** 2)


def local_u3_norm(ctx: LocalContext3, f: GroupFunction, tol: float = DEFAULT_TOL) -> float:
    return _root_of_diagonal(local_u3_inner(ctx, [f] * 8), 8, tol)


def support_triples_consistent(ctx: LocalContext3) -> bool:
    """Every (x, y, z) with nonzero pair weights sums into the atom labeled
    sigma3(d); hence the inner product only reads its arguments there."""
    factor = ctx.factor
    sp = factor.space
    target = factor.label_code(ctx.sigma.values)
    codes = factor._codes[sp.sum_grid3(ctx.xs, ctx.ys, ctx.zs)]
    mask = ((ctx.mu12[:, :, None] != 0.0)
            & (ctx.mu13[:, None, :] != 0.0)
            & (ctx.mu23[None, :, :] != 0.0))
    if not mask.any():
        return True
    return bool((codes[mask] == target).all())


def local_u3_dominates_check(linear: LinearFactor, a1, a2, a3, f: GroupFunction,
                             tol: float = DEFAULT_TOL) -> tuple[float, float, float]:
    """On a purely linear factor, the local U^3 norm with zero bilinear
    labels dominates the local U^2 norm at the direction (a1 + a2, a3).
    Returns (u3val, u2val, margin)."""
    p = linear.p
    a1 = tuple(int(v) % p for v in a1)
    a2 = tuple(int(v) % p for v in a2)
    a3 = tuple(int(v) % p for v in a3)
    quad = QuadraticFactor(linear, ())
    d3 = DirectionTuple3(p, a1, a2, a3, (), (), ())
    ctx3 = LocalContext3(quad, d3)
    u3val = local_u3_norm(ctx3, f, tol)
    a12 = tuple((u + v) % p for u, v in zip(a1, a2))
    ctx2 = LocalContext2(linear, DirectionTuple2(p, a12, a3))
    u2val = local_u2_norm(ctx2, f, tol)
    return u3val, u2val, u3val - u2val

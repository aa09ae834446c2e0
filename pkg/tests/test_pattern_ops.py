"""Grid pattern averages: dual routes, witness identities, caps."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from qflab.errors import CapExceeded, DegenerateContext, EmptyAtom
from qflab.factor import (
    DirectionTuple2,
    DirectionTuple3,
    mu_weight_matrix,
    new_linear_factor,
    new_quadratic_factor,
)
from qflab.pattern_ops import (
    FunctionGrid,
    LabelAssignment,
    PatternHypergraph,
    bipartite_normalization,
    if_enumerate,
    ip2_hypergraph,
    t_bipartite,
    t_ip,
    t_ip2,
    t_ip2_local,
    t_ip2_per_s_oracle,
    t_ip_local,
    t_ip_naive,
    t_ternary,
    ternary_normalization,
    weighted_ternary_density,
    witness_count_bipartite,
    witness_count_ternary,
)
from qflab.spectral import GroupFunction


def _random_f(p, n, seed):
    rng = np.random.default_rng(seed)
    N = p ** n
    vals = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    vals = vals / np.maximum(np.abs(vals), 1.0)
    return GroupFunction(p, n, vals, one_bounded=True)


def _mixed_factor():
    lin = new_linear_factor(3, 3, [(1, 0, 0)])
    return new_quadratic_factor(lin, [np.eye(3, dtype=np.int64)])


def _trivial_factor(p, n):
    return new_quadratic_factor(new_linear_factor(p, n, []), [])


def _indicator_pair(p, n, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random(p ** n) < 0.5
    ind = GroupFunction.indicator(p, n, np.nonzero(mask)[0])
    indc = GroupFunction.indicator(p, n, np.nonzero(~mask)[0])
    return mask, ind, indc


@pytest.mark.parametrize("m", [1, 2, 3])
def test_ip_average_matches_naive(m):
    fs = [_random_f(3, 1, seed=m * 8 + k) for k in range(2)]
    grid = FunctionGrid.ip_select(m, fs[0], fs[1])
    assert t_ip(m, grid) == pytest.approx(t_ip_naive(m, grid), abs=1e-10)


def test_ip_local_with_trivial_factor_is_global():
    lin = new_linear_factor(3, 2, [])
    grid = FunctionGrid.ip_diagonal(2, _random_f(3, 2, seed=1))
    local = t_ip_local(2, lin, DirectionTuple2(3, (), ()), grid)
    assert local == pytest.approx(t_ip(2, grid), abs=1e-10)


def test_ip_average_is_linear_in_one_slot():
    f = _random_f(3, 2, seed=2)
    grid = FunctionGrid.ip_diagonal(1, f)
    base = t_ip(1, grid)
    tweaked = dict(grid.mapping)
    tweaked[(1, 0)] = f.scale(3.0 - 1.0j)
    assert t_ip(1, FunctionGrid(tweaked)) == pytest.approx(
        (3.0 - 1.0j) * base, abs=1e-10)


@pytest.mark.parametrize("m", [1, 2])
def test_ip2_average_matches_per_subset_oracle(m):
    fs = [_random_f(3, 1, seed=m * 9 + k) for k in range(2)]
    grid = FunctionGrid.ip2_select(m, fs[0], fs[1])
    assert t_ip2(m, grid) == pytest.approx(t_ip2_per_s_oracle(m, grid), abs=1e-10)


def test_ip2_local_with_trivial_factor_is_global():
    factor = _trivial_factor(3, 2)
    grid = FunctionGrid.ip2_diagonal(1, _random_f(3, 2, seed=3))
    d = DirectionTuple3(3, (), (), (), (), (), ())
    assert t_ip2_local(1, factor, d, grid) == pytest.approx(t_ip2(1, grid), abs=1e-10)


def test_ip2_hypergraph_shape():
    g1 = ip2_hypergraph(1)
    assert (g1.nu, g1.nv, g1.nw) == (1, 1, 2)
    assert g1.edges == frozenset({(0, 0, 1)})
    g2 = ip2_hypergraph(2)
    assert (g2.nu, g2.nv, g2.nw) == (2, 2, 16)
    assert len(g2.edges) == 32
    for (i, j, s) in g2.edges:
        assert s >> (i * 2 + j) & 1


@pytest.mark.parametrize("m", [1, 2])
def test_ternary_operator_reproduces_local_ip2(m):
    factor = _mixed_factor()
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (0,), (0,), (0,))
    graph = ip2_hypergraph(m)
    f_in = _random_f(3, 3, seed=70 + m)
    f_out = _random_f(3, 3, seed=80 + m)
    via_ip2 = t_ip2_local(
        m, factor, d, FunctionGrid.ip2_select(m, f_in, f_out))
    e = LabelAssignment.constant(graph, d)
    via_ternary = t_ternary(
        graph, factor, e, FunctionGrid.edge_select(graph, f_in, f_out))
    assert via_ternary == pytest.approx(via_ip2, abs=1e-9)


def test_ternary_average_is_linear_in_one_slot():
    factor = _mixed_factor()
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (0,), (0,), (0,))
    graph = PatternHypergraph("ternary", {"U": 1, "V": 1, "W": 2},
                              frozenset({(0, 0, 0)}))
    e = LabelAssignment.constant(graph, d)
    f = _random_f(3, 3, seed=4)
    grid = FunctionGrid({t: f for t in graph.all_tuples()})
    base = t_ternary(graph, factor, e, grid)
    tweaked = dict(grid.mapping)
    tweaked[(0, 0, 1)] = f.scale(2.0 + 0.5j)
    assert t_ternary(graph, factor, e, FunctionGrid(tweaked)) == pytest.approx(
        (2.0 + 0.5j) * base, abs=1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bipartite_witness_identity(seed):
    lin = new_linear_factor(3, 3, [(1, 0, 0), (0, 1, 0)])
    rng = np.random.default_rng(100 + seed)
    edges = frozenset((u, v) for u in range(2) for v in range(2)
                      if rng.random() < 0.5)
    graph = PatternHypergraph("bipartite", {"U": 2, "V": 2}, edges)
    u_labels = [tuple(rng.integers(0, 3, size=2)) for _ in range(2)]
    v_labels = [tuple(rng.integers(0, 3, size=2)) for _ in range(2)]
    mask, ind, indc = _indicator_pair(3, 3, seed=200 + seed)
    grid = FunctionGrid.edge_select(graph, ind, indc)
    val = t_bipartite(graph, lin, u_labels, v_labels, grid)
    assert abs(val.imag) <= 1e-12
    count = witness_count_bipartite(graph, lin, u_labels, v_labels, mask)
    norm = bipartite_normalization(graph, lin)
    assert norm == 81
    assert val.real * norm == pytest.approx(count, abs=1e-6 * max(1, count))


@pytest.mark.parametrize("seed", [0, 1])
def test_ternary_witness_identity(seed):
    factor = _mixed_factor()
    rng = np.random.default_rng(300 + seed)
    edges = frozenset(t for t in itertools.product(range(2), repeat=3)
                      if rng.random() < 0.5)
    graph = PatternHypergraph("ternary", {"U": 2, "V": 2, "W": 2}, edges)
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (0,), (0,), (0,))
    e = LabelAssignment.constant(graph, d)
    mask, ind, indc = _indicator_pair(3, 3, seed=400 + seed)
    val = t_ternary(graph, factor, e, FunctionGrid.edge_select(graph, ind, indc))
    assert abs(val.imag) <= 1e-12
    count = witness_count_ternary(graph, factor, e, mask)
    norm = ternary_normalization(graph, factor, e)
    assert isinstance(norm, Fraction)
    assert val.real * float(norm) == pytest.approx(count, abs=1e-6 * max(1, count))


def test_configuration_count_matches_direct_masks():
    factor = _mixed_factor()
    graph = PatternHypergraph("ternary", {"U": 1, "V": 1, "W": 1},
                              frozenset({(0, 0, 0)}))
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (1,), (2,), (0,))
    e = LabelAssignment.constant(graph, d)
    xs = factor.atom_indices((0, 1))
    ys = factor.atom_indices((1, 2))
    zs = factor.atom_indices((2, 1))
    m12 = mu_weight_matrix(factor, (1,), xs, ys) != 0.0
    m13 = mu_weight_matrix(factor, (2,), xs, zs) != 0.0
    m23 = mu_weight_matrix(factor, (0,), ys, zs) != 0.0
    direct = int(np.einsum("xy,xz,yz->", m12.astype(np.int64),
                           m13.astype(np.int64), m23.astype(np.int64)))
    assert if_enumerate(graph, factor, e) == direct


def test_witness_count_collapses_for_extreme_sets():
    factor = _mixed_factor()
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (0,), (0,), (0,))
    complete = PatternHypergraph(
        "ternary", {"U": 2, "V": 2, "W": 2},
        frozenset(itertools.product(range(2), repeat=3)))
    e = LabelAssignment.constant(complete, d)
    everything = np.ones(27, dtype=bool)
    assert witness_count_ternary(complete, factor, e, everything) == \
        if_enumerate(complete, factor, e)
    empty_graph = PatternHypergraph("ternary", {"U": 2, "V": 2, "W": 2},
                                    frozenset())
    e2 = LabelAssignment.constant(empty_graph, d)
    nothing = np.zeros(27, dtype=bool)
    assert witness_count_ternary(empty_graph, factor, e2, nothing) == \
        if_enumerate(empty_graph, factor, e2)


def test_weighted_density_extremes():
    factor = _mixed_factor()
    d = DirectionTuple3(3, (0, 1), (1, 2), (2, 1), (0,), (0,), (0,))
    value, alpha = weighted_ternary_density(factor, d, np.ones(27, dtype=bool))
    assert alpha == 1.0
    assert value >= 0.0
    # removing A from the target atom kills both numbers: the weighted sum
    # only reads membership there
    from qflab.local_norms import LocalContext3

    target = LocalContext3(factor, d).target_indices()
    partial = np.ones(27, dtype=bool)
    partial[target] = False
    value0, alpha0 = weighted_ternary_density(factor, d, partial)
    assert alpha0 == 0.0
    assert value0 == pytest.approx(0.0, abs=1e-12)


def test_weighted_density_refuses_an_empty_target():
    lin = new_linear_factor(3, 2, [(1, 0)])
    factor = new_quadratic_factor(lin, [np.eye(2, dtype=np.int64)])
    # sigma3 lands on (0, 2), which the coset x1 = 0 never reaches
    d = DirectionTuple3(3, (0, 0), (0, 0), (0, 0), (1,), (0,), (0,))
    with pytest.raises(EmptyAtom):
        weighted_ternary_density(factor, d, np.ones(9, dtype=bool))


def test_degenerate_atoms_are_refused():
    lin = new_linear_factor(3, 2, [(1, 0)])
    factor = new_quadratic_factor(lin, [np.eye(2, dtype=np.int64)])
    grid = FunctionGrid.ip2_diagonal(1, _random_f(3, 2, seed=5))
    d = DirectionTuple3(3, (0, 2), (0, 0), (0, 0), (0,), (0,), (0,))
    with pytest.raises(DegenerateContext):
        t_ip2_local(1, factor, d, grid)


def test_caps():
    f = _random_f(3, 1, seed=6)
    with pytest.raises(CapExceeded):
        t_ip(4, FunctionGrid.ip_diagonal(4, f))
    with pytest.raises(CapExceeded):
        ip2_hypergraph(3)
    with pytest.raises(CapExceeded):
        t_ip2(3, FunctionGrid.ip2_diagonal(1, f))
    wide = PatternHypergraph("bipartite", {"U": 4, "V": 1}, frozenset())
    lin = new_linear_factor(3, 1, [])
    with pytest.raises(CapExceeded):
        t_bipartite(wide, lin, [()] * 4, [()],
                    FunctionGrid({(u, 0): f for u in range(4)}))
    tall = PatternHypergraph("ternary", {"U": 3, "V": 1, "W": 1}, frozenset())
    factor = _trivial_factor(3, 1)
    e = LabelAssignment.constant(tall, DirectionTuple3(3, (), (), (), (), (), ()))
    with pytest.raises(CapExceeded):
        t_ternary(tall, factor, e,
                  FunctionGrid({t: f for t in tall.all_tuples()}))
    deep = PatternHypergraph("ternary", {"U": 1, "V": 1, "W": 3}, frozenset())
    e3 = LabelAssignment.constant(deep, DirectionTuple3(3, (), (), (), (), (), ()))
    with pytest.raises(CapExceeded):
        witness_count_ternary(deep, factor, e3, np.ones(3, dtype=bool))


def test_grid_validation():
    f = _random_f(3, 1, seed=7)
    with pytest.raises(ValueError):
        FunctionGrid({})
    with pytest.raises(ValueError):
        t_ip(1, FunctionGrid({(1, 0): f}))
    assert FunctionGrid.ip_diagonal(1, f).one_bounded
    loud = GroupFunction(3, 1, np.array([3.0, 0.0, 0.0]))
    assert not FunctionGrid({(1, 0): f, (1, 1): loud}).one_bounded

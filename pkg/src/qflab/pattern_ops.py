"""IP and IP2 pattern operators (global and local), multi-local operators
over bipartite graphs and 3-partite 3-uniform hypergraphs, witness counting,
and the weighted ternary density average.

Conventions:

* m-IP grids are keyed (i, s) with i in 1..m and s a bitmask over [m]
  (bit i-1 set iff i in S). The average runs over x_1..x_m and one y_S per
  subset, with the product of f_{i,S}(x_i + y_S) over all m * 2^m pairs.
* m-IP2 grids are keyed (i, j, s) with s a bitmask over [m]^2
  (bit (i'-1)*m + (j'-1) set iff (i', j') in S).
* Bipartite / ternary grids are keyed (u, v) / (u, v, w) with 0-based
  vertex indices; the product runs over ALL pairs / triples, with edges
  selecting the "on" function in the f|g shorthand.

Every operator with independent completion variables (y_S, z_S, z_w) is
evaluated by conditioning on the remaining variables and multiplying the
now-independent inner averages; the naive nested sums are retained as
reference routes for small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CapExceeded, DegenerateContext, EmptyAtom, EmptyLevelSet
from .factor import (
    DirectionTuple2,
    DirectionTuple3,
    LinearFactor,
    QuadraticFactor,
    mu_weight_matrix,
)
from .spectral import GroupFunction
from .fpn_core import space

GRID_CAP = 1 << 24
MAX_IP_M = 3
MAX_IP2_M = 2


# ---------------------------------------------------------------------------
# pattern shapes and grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatternHypergraph:
    """A bipartite graph on parts U, V or a 3-partite 3-uniform hypergraph
    on parts U, V, W; vertices are 0-based indices within each part."""

    kind: str
    sizes: dict
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.kind not in ("bipartite", "ternary"):
            raise ValueError(f"unknown kind {self.kind!r}")
        want = ("U", "V") if self.kind == "bipartite" else ("U", "V", "W")
        if tuple(sorted(self.sizes)) != tuple(sorted(want)):
            raise ValueError(f"parts must be exactly {want}")
        edges = frozenset(tuple(int(x) for x in e) for e in self.edges)
        arity = len(want)
        for e in edges:
            if len(e) != arity:
                raise ValueError(f"edge {e} has wrong arity")
            for coord, part in zip(e, want):
                if not 0 <= coord < self.sizes[part]:
                    raise ValueError(f"edge {e} leaves part {part}")
        object.__setattr__(self, "edges", edges)

    @property
    def nu(self) -> int:
        return self.sizes["U"]

    @property
    def nv(self) -> int:
        return self.sizes["V"]

    @property
    def nw(self) -> int:
        return self.sizes["W"]

    def all_tuples(self):
        if self.kind == "bipartite":
            return itertools.product(range(self.nu), range(self.nv))
        return itertools.product(range(self.nu), range(self.nv), range(self.nw))


def ip2_hypergraph(m: int) -> PatternHypergraph:
    """The ternary hypergraph whose multi-local operator reproduces local
    m-IP2: U = V = [m], W indexes subsets of [m]^2, edge (i, j, S) iff
    (i, j) in S (bit (i-1)*m + (j-1) of the subset code)."""
    if m > MAX_IP2_M:
        raise CapExceeded(f"m = {m} exceeds the IP2 cap {MAX_IP2_M}")
    edges = []
    for s_code in range(1 << (m * m)):
        for i in range(m):
            for j in range(m):
                if s_code >> (i * m + j) & 1:
                    edges.append((i, j, s_code))
    return PatternHypergraph("ternary", {"U": m, "V": m, "W": 1 << (m * m)}, frozenset(edges))


@dataclass(frozen=True)
class LabelAssignment:
    """Per-vertex atom labels and per-pair bilinear labels for a ternary
    hypergraph; every triple (u, v, w) induces the direction tuple
    (a_u, b_v, c_w, d_uv, d_uw, d_vw)."""

    a: tuple
    b: tuple
    c: tuple
    duv: dict
    duw: dict
    dvw: dict

    @classmethod
    def constant(cls, graph: PatternHypergraph, d: DirectionTuple3) -> LabelAssignment:
        duv = {(u, v): d.b12 for u in range(graph.nu) for v in range(graph.nv)}
        duw = {(u, w): d.b13 for u in range(graph.nu) for w in range(graph.nw)}
        dvw = {(v, w): d.b23 for v in range(graph.nv) for w in range(graph.nw)}
        return cls((d.a1,) * graph.nu, (d.a2,) * graph.nv, (d.a3,) * graph.nw,
                   duv, duw, dvw)

    def triple_direction(self, p: int, u: int, v: int, w: int) -> DirectionTuple3:
        return DirectionTuple3(p, self.a[u], self.b[v], self.c[w],
                               self.duv[(u, v)], self.duw[(u, w)], self.dvw[(v, w)])


class FunctionGrid:
    """An indexed family of functions sharing one group, with the f|g
    shorthand constructors (pattern membership selects the first)."""

    def __init__(self, mapping: dict) -> None:
        if not mapping:
            raise ValueError("empty grid")
        fns = list(mapping.values())
        p, n = fns[0].p, fns[0].n
        for g in fns:
            if (g.p, g.n) != (p, n):
                raise ValueError("grid functions on different groups")
        self.mapping = dict(mapping)
        self.p = p
        self.n = n

    def __getitem__(self, key) -> GroupFunction:
        return self.mapping[key]

    def functions(self):
        return self.mapping.values()

    @property
    def one_bounded(self) -> bool:
        return all(g.one_bounded for g in self.mapping.values())

    @classmethod
    def ip_diagonal(cls, m: int, f: GroupFunction) -> FunctionGrid:
        return cls({(i, s): f for i in range(1, m + 1) for s in range(1 << m)})

    @classmethod
    def ip_select(cls, m: int, f_in: GroupFunction, f_out: GroupFunction) -> FunctionGrid:
        return cls({(i, s): f_in if s >> (i - 1) & 1 else f_out
                    for i in range(1, m + 1) for s in range(1 << m)})

    @classmethod
    def ip2_diagonal(cls, m: int, f: GroupFunction) -> FunctionGrid:
        return cls({(i, j, s): f for i in range(1, m + 1) for j in range(1, m + 1)
                    for s in range(1 << (m * m))})

    @classmethod
    def ip2_select(cls, m: int, f_in: GroupFunction, f_out: GroupFunction) -> FunctionGrid:
        return cls({(i, j, s): f_in if s >> ((i - 1) * m + (j - 1)) & 1 else f_out
                    for i in range(1, m + 1) for j in range(1, m + 1)
                    for s in range(1 << (m * m))})

    @classmethod
    def edge_select(cls, graph: PatternHypergraph, f_edge: GroupFunction,
                    f_nonedge: GroupFunction) -> FunctionGrid:
        return cls({t: f_edge if t in graph.edges else f_nonedge
                    for t in graph.all_tuples()})


# ---------------------------------------------------------------------------
# IP operators
# ---------------------------------------------------------------------------

def _ip_check(m: int, grid: FunctionGrid) -> None:
    if m > MAX_IP_M:
        raise CapExceeded(f"m = {m} exceeds the IP cap {MAX_IP_M}")
    for i in range(1, m + 1):
        for s in range(1 << m):
            if (i, s) not in grid.mapping:
                raise ValueError(f"grid missing slot {(i, s)}")


def _ip_engine(m: int, grid: FunctionGrid, xs_list: list[np.ndarray],
               ys: np.ndarray) -> complex:
    """E over x_i in xs_list[i], independent y_S in ys, of the full product.
    Conditioning on (x_i) makes the 2^m y-averages independent."""
    sp = space(grid.p, grid.n)
    sizes = [a.size for a in xs_list]
    if int(np.prod(sizes)) * ys.size > GRID_CAP:
        raise CapExceeded("IP member tables too large")
    tables = [sp.sum_grid(xs, ys) for xs in xs_list]  #, per i: x + y
    total_shape = tuple(sizes)
    prod = np.ones(total_shape)
    for s in range(1 << m):
        mats = [grid[(i + 1, s)].values[tables[i]] for i in range(m)]
        if m == 1:
            avg = mats[0].mean(axis=1)
        elif m == 2:
            avg = mats[0] @ mats[1].T / ys.size
        else:
            avg = np.einsum("ay,by,cy->abc", *mats) / ys.size
        prod = prod * avg
    return complex(prod.mean())


def t_ip(m: int, grid: FunctionGrid) -> complex:
    """E_{x_1..x_m} E_{y_S : S subset [m]} prod f_{i,S}(x_i + y_S)."""
    _ip_check(m, grid)
    full = np.arange(space(grid.p, grid.n).size, dtype=np.int64)
    return _ip_engine(m, grid, [full] * m, full)


def t_ip_local(m: int, linear: LinearFactor, d: DirectionTuple2,
               grid: FunctionGrid) -> complex:
    """Same average with every x_i confined to L(a1) and every y_S to L(a2)."""
    _ip_check(m, grid)
    if (linear.p, linear.n) != (grid.p, grid.n):
        raise ValueError("factor and grid on different groups")
    xs = linear.coset_indices(d.a1)
    ys = linear.coset_indices(d.a2)
    return _ip_engine(m, grid, [xs] * m, ys)


def t_ip_naive(m: int, grid: FunctionGrid) -> complex:
    """Reference route: the literal nested sum over all m + 2^m variables,
    formed as one broadcast product of gathered tables."""
    _ip_check(m, grid)
    sp = space(grid.p, grid.n)
    N = sp.size
    nvars = m + (1 << m)
    if N ** nvars > GRID_CAP:
        raise CapExceeded("naive IP sum too large")
    idx = np.arange(N, dtype=np.int64)
    shape = (N,) * nvars
    prod = np.ones(shape, dtype=np.complex128)
    for i in range(m):
        for s in range(1 << m):
            xi = idx.reshape((1,) * i + (N,) + (1,) * (nvars - i - 1))
            ys = idx.reshape((1,) * (m + s) + (N,) + (1,) * (nvars - m - s - 1))
            prod = prod * grid[(i + 1, s)].values[sp.add(xi, ys)]
    return complex(prod.mean())


# ---------------------------------------------------------------------------
# IP2 operators
# ---------------------------------------------------------------------------

def _ip2_check(m: int, grid: FunctionGrid) -> None:
    if m > MAX_IP2_M:
        raise CapExceeded(f"m = {m} exceeds the IP2 cap {MAX_IP2_M}")
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            for s in range(1 << (m * m)):
                if (i, j, s) not in grid.mapping:
                    raise ValueError(f"grid missing slot {(i, j, s)}")


def _ip2_engine(m: int, grid: FunctionGrid, xs: np.ndarray, ys: np.ndarray,
                zs: np.ndarray, mu12: np.ndarray, mu13: np.ndarray,
                mu23: np.ndarray) -> complex:
    """Conditioned on (x_i), (y_j), the 2^(m^2) z_S-averages factor. Each is
    a weighted contraction over z; the outer average carries the mu12
    weights. Member tensors t[i, j, k] = f(x_i + y_j + z_k) are cached per
    distinct function."""
    sp = space(grid.p, grid.n)
    s1, s2, s3 = xs.size, ys.size, zs.size
    if s1 * s2 * s3 > GRID_CAP:
        raise CapExceeded("IP2 member tensor too large")
    tensors: dict[int, np.ndarray] = {}
    for g in grid.functions():
        if id(g) not in tensors:
            tensors[id(g)] = g.values[sp.sum_grid3(xs, ys, zs)]
    nsub = 1 << (m * m)
    if m == 1:
        total = 0.0
        for j0 in range(s2):
            wz = mu23[j0]
            prod = np.ones(s1)
            for s in range(nsub):
                mat = tensors[id(grid[(1, 1, s)])][:, j0, :]
                prod = prod * ((mu13 * mat * wz).sum(axis=1) / s3)
            total = total + (mu12[:, j0] * prod).sum()
        return complex(total / (s1 * s2))
    total = 0.0
    slot_ids = {}
    for s in range(nsub):
        slot_ids[s] = (id(grid[(1, 1, s)]), id(grid[(1, 2, s)]),
                       id(grid[(2, 1, s)]), id(grid[(2, 2, s)]))
    for j0 in range(s2):
        for j1 in range(s2):
            wz = mu23[j0] * mu23[j1]
            prod = np.ones((s1, s1))
            kernel_cache: dict[tuple, np.ndarray] = {}
            for s in range(nsub):
                key = slot_ids[s]
                k = kernel_cache.get(key)
                if k is None:
                    a = mu13 * tensors[key[0]][:, j0, :] * tensors[key[1]][:, j1, :]
                    b = mu13 * tensors[key[2]][:, j0, :] * tensors[key[3]][:, j1, :]
                    k = (a * wz) @ b.T / s3
                    kernel_cache[key] = k
                prod = prod * k
            wx = mu12[:, j0] * mu12[:, j1]
            total = total + ((wx[:, None] * wx[None, :]) * prod).sum()
    return complex(total / (s1 * s1 * s2 * s2))


def t_ip2(m: int, grid: FunctionGrid) -> complex:
    """E_{x_i, y_j} E_{z_S : S subset [m]^2} prod f_{i,j,S}(x_i + y_j + z_S)."""
    _ip2_check(m, grid)
    full = np.arange(space(grid.p, grid.n).size, dtype=np.int64)
    ones12 = np.ones((full.size, full.size))
    return _ip2_engine(m, grid, full, full, full, ones12, ones12, ones12)


def t_ip2_local(m: int, factor: QuadraticFactor, d: DirectionTuple3,
                grid: FunctionGrid) -> complex:
    """The mu-weighted variant: x_i in B(a1), y_j in B(a2), z_S in B(a3),
    with measure factors for every (x_i, y_j), (x_i, z_S), (y_j, z_S)."""
    _ip2_check(m, grid)
    if (factor.p, factor.n) != (grid.p, grid.n):
        raise ValueError("factor and grid on different groups")
    xs = factor.atom_indices(d.a1)
    ys = factor.atom_indices(d.a2)
    zs = factor.atom_indices(d.a3)
    for name, arr in (("a1", xs), ("a2", ys), ("a3", zs)):
        if arr.size == 0:
            raise DegenerateContext(f"atom {name} = {getattr(d, name)} is empty")
    try:
        mu12 = mu_weight_matrix(factor, d.b12, xs, ys)
        mu13 = mu_weight_matrix(factor, d.b13, xs, zs)
        mu23 = mu_weight_matrix(factor, d.b23, ys, zs)
    except EmptyLevelSet as exc:
        raise DegenerateContext(str(exc)) from exc
    return _ip2_engine(m, grid, xs, ys, zs, mu12, mu13, mu23)


def t_ip2_per_s_oracle(m: int, grid: FunctionGrid) -> complex:
    """Reference route for the global operator: explicit loops over the
    (x_i), (y_j) tuples, each z_S-average computed by its own direct loop."""
    _ip2_check(m, grid)
    sp = space(grid.p, grid.n)
    N = sp.size
    if N ** (2 * m + 1) * (1 << (m * m)) > GRID_CAP:
        raise CapExceeded("per-subset oracle too large")
    vals = {k: g.values for k, g in grid.mapping.items()}
    total = 0.0 + 0.0j
    for xv in itertools.product(range(N), repeat=m):
        for yv in itertools.product(range(N), repeat=m):
            prod = 1.0 + 0.0j
            for s in range(1 << (m * m)):
                zsum = 0.0 + 0.0j
                for z in range(N):
                    term = 1.0 + 0.0j
                    for i in range(1, m + 1):
                        for j in range(1, m + 1):
                            arg = sp.add(sp.add(xv[i - 1], yv[j - 1]), z)
                            term *= vals[(i, j, s)][arg]
                    zsum += term
                prod *= zsum / N
            total += prod
    return complex(total / N ** (2 * m))


# ---------------------------------------------------------------------------
# bipartite multi-local operator
# ---------------------------------------------------------------------------

def _coset_members(linear: LinearFactor, labels) -> list[np.ndarray]:
    return [linear.coset_indices(tuple(lab)) for lab in labels]


def t_bipartite(graph: PatternHypergraph, linear: LinearFactor, u_labels,
                v_labels, grid: FunctionGrid) -> complex:
    """E over x_u in L(d_u), y_v in L(d_v) of prod over ALL pairs (u, v) of
    f_{u,v}(x_u + y_v); conditioning on the y's factors the per-u averages."""
    if graph.kind != "bipartite":
        raise ValueError("need a bipartite graph")
    if graph.nu > 3 or graph.nv > 3:
        raise CapExceeded("bipartite parts capped at 3")
    if (linear.p, linear.n) != (grid.p, grid.n):
        raise ValueError("factor and grid on different groups")
    sp = linear.space
    xs = _coset_members(linear, u_labels)
    ys = _coset_members(linear, v_labels)
    s = xs[0].size
    letters = "abc"[: graph.nv]
    pattern = ",".join(f"x{c}" for c in letters) + "->" + letters
    per_u = []
    for u in range(graph.nu):
        mats = [grid[(u, v)].values[sp.sum_grid(xs[u], ys[v])] for v in range(graph.nv)]
        per_u.append(np.einsum(pattern, *mats) / s)
    prod = per_u[0]
    for h in per_u[1:]:
        prod = prod * h
    return complex(prod.mean())


def witness_count_bipartite(graph: PatternHypergraph, linear: LinearFactor,
                            u_labels, v_labels, member: np.ndarray) -> int:
    """Number of tuples ((a_u), (b_v)) in the prescribed cosets with
    a_u + b_v in A exactly when (u, v) is an edge. Counted directly: for
    each choice of the b's, multiply per-u counts of compatible a's."""
    if graph.kind != "bipartite":
        raise ValueError("need a bipartite graph")
    sp = linear.space
    member = np.asarray(member, dtype=bool)
    xs = _coset_members(linear, u_labels)
    ys = _coset_members(linear, v_labels)
    want = {(u, v): ((u, v) in graph.edges) for u in range(graph.nu) for v in range(graph.nv)}
    total = 0
    for yv in itertools.product(*[ys[v] for v in range(graph.nv)]):
        prod = 1
        for u in range(graph.nu):
            ok = np.ones(xs[u].size, dtype=bool)
            for v in range(graph.nv):
                ok &= member[sp.add(xs[u], int(yv[v]))] == want[(u, v)]
            prod *= int(ok.sum())
            if prod == 0:
                break
        total += prod
    return total


# ---------------------------------------------------------------------------
# ternary multi-local operator
# ---------------------------------------------------------------------------

class _TernaryContext:
    """Member arrays, mu matrices, and masks for one labeled hypergraph."""

    def __init__(self, graph: PatternHypergraph, factor: QuadraticFactor,
                 e: LabelAssignment) -> None:
        if graph.kind != "ternary":
            raise ValueError("need a ternary hypergraph")
        if graph.nu > 2 or graph.nv > 2:
            raise CapExceeded("ternary parts U, V capped at 2")
        if graph.nw > 16:
            raise CapExceeded("ternary part W capped at 16")
        self.graph = graph
        self.factor = factor
        self.xs = [factor.atom_indices(tuple(lab)) for lab in e.a]
        self.ys = [factor.atom_indices(tuple(lab)) for lab in e.b]
        self.zs = [factor.atom_indices(tuple(lab)) for lab in e.c]
        for part, arrs, labs in (("U", self.xs, e.a), ("V", self.ys, e.b), ("W", self.zs, e.c)):
            for lab, arr in zip(labs, arrs):
                if arr.size == 0:
                    raise DegenerateContext(f"atom {tuple(lab)} in part {part} is empty")
        try:
            self.muv = {(u, v): mu_weight_matrix(factor, e.duv[(u, v)], self.xs[u], self.ys[v])
                        for u in range(graph.nu) for v in range(graph.nv)}
            self.muw = {(u, w): mu_weight_matrix(factor, e.duw[(u, w)], self.xs[u], self.zs[w])
                        for u in range(graph.nu) for w in range(graph.nw)}
            self.mvw = {(v, w): mu_weight_matrix(factor, e.dvw[(v, w)], self.ys[v], self.zs[w])
                        for v in range(graph.nv) for w in range(graph.nw)}
        except EmptyLevelSet as exc:
            raise DegenerateContext(str(exc)) from exc


def t_ternary(graph: PatternHypergraph, factor: QuadraticFactor,
              e: LabelAssignment, grid: FunctionGrid) -> complex:
    """E over x_u, y_v, z_w in their atoms of all pair measures times the
    product of f_{u,v,w}(x_u + y_v + z_w) over ALL triples; the z_w-averages
    are independent once the x's and y's are fixed."""
    ctx = _TernaryContext(graph, factor, e)
    sp = factor.space
    graph_, xs, ys, zs = ctx.graph, ctx.xs, ctx.ys, ctx.zs
    tensors: dict[tuple, np.ndarray] = {}
    for (u, v, w) in graph_.all_tuples():
        g = grid[(u, v, w)]
        key = (u, v, w)
        tensors[key] = g.values[sp.sum_grid3(xs[u], ys[v], zs[w])]
    total = 0.0
    for yv in itertools.product(*[range(a.size) for a in ys]):
        per_w = []
        for w in range(graph_.nw):
            wz = np.ones(zs[w].size)
            for v in range(graph_.nv):
                wz = wz * ctx.mvw[(v, w)][yv[v]]
            rows = []
            for u in range(graph_.nu):
                c = ctx.muw[(u, w)].copy()
                for v in range(graph_.nv):
                    c = c * tensors[(u, v, w)][:, yv[v], :]
                rows.append(c)
            if graph_.nu == 1:
                g_w = (rows[0] * wz).sum(axis=1) / zs[w].size
            else:
                g_w = (rows[0] * wz) @ rows[1].T / zs[w].size
            per_w.append(g_w)
        prod = per_w[0]
        for g_w in per_w[1:]:
            prod = prod * g_w
        if graph_.nu == 1:
            wx = np.ones(xs[0].size)
            for v in range(graph_.nv):
                wx = wx * ctx.muv[(0, v)][:, yv[v]]
            total = total + (wx * prod).sum()
        else:
            wx0 = np.ones(xs[0].size)
            wx1 = np.ones(xs[1].size)
            for v in range(graph_.nv):
                wx0 = wx0 * ctx.muv[(0, v)][:, yv[v]]
                wx1 = wx1 * ctx.muv[(1, v)][:, yv[v]]
            total = total + ((wx0[:, None] * wx1[None, :]) * prod).sum()
    denom = 1
    for a in xs:
        denom *= a.size
    for a in ys:
        denom *= a.size
    return complex(total / denom)


def if_enumerate(graph: PatternHypergraph, factor: QuadraticFactor,
                 e: LabelAssignment) -> int:
    """|I_F(e)|: the number of configurations ((x_u), (y_v), (z_w)) in the
    prescribed atoms satisfying every bilinear pair constraint."""
    ctx = _TernaryContext(graph, factor, e)
    graph_, xs, ys, zs = ctx.graph, ctx.xs, ctx.ys, ctx.zs
    muv = {k: m != 0.0 for k, m in ctx.muv.items()}
    muw = {k: m != 0.0 for k, m in ctx.muw.items()}
    mvw = {k: m != 0.0 for k, m in ctx.mvw.items()}
    total = 0
    for yv in itertools.product(*[range(a.size) for a in ys]):
        for xv in itertools.product(*[range(a.size) for a in xs]):
            ok = True
            for u in range(graph_.nu):
                for v in range(graph_.nv):
                    if not muv[(u, v)][xv[u], yv[v]]:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            prod = 1
            for w in range(graph_.nw):
                mask = np.ones(zs[w].size, dtype=bool)
                for v in range(graph_.nv):
                    mask &= mvw[(v, w)][yv[v]]
                for u in range(graph_.nu):
                    mask &= muw[(u, w)][xv[u]]
                prod *= int(mask.sum())
                if prod == 0:
                    break
            total += prod
    return total


def witness_count_ternary(graph: PatternHypergraph, factor: QuadraticFactor,
                          e: LabelAssignment, member: np.ndarray) -> int:
    """Number of configurations in I_F(e) whose membership pattern matches
    the edge set exactly: x_u + y_v + z_w in A iff (u, v, w) is an edge.
    Direct enumeration; the last W vertex is tested in a vectorized sweep."""
    ctx = _TernaryContext(graph, factor, e)
    graph_, xs, ys, zs = ctx.graph, ctx.xs, ctx.ys, ctx.zs
    if graph_.nw > 2:
        raise CapExceeded("brute witness counting capped at |W| = 2")
    sp = factor.space
    member = np.asarray(member, dtype=bool)
    want = {t: (t in graph_.edges) for t in graph_.all_tuples()}
    muv = {k: m != 0.0 for k, m in ctx.muv.items()}
    muw = {k: m != 0.0 for k, m in ctx.muw.items()}
    mvw = {k: m != 0.0 for k, m in ctx.mvw.items()}
    wlast = graph_.nw - 1
    total = 0
    for xv in itertools.product(*[range(a.size) for a in xs]):
        for yv in itertools.product(*[range(a.size) for a in ys]):
            ok = all(muv[(u, v)][xv[u], yv[v]]
                     for u in range(graph_.nu) for v in range(graph_.nv))
            if not ok:
                continue
            head = itertools.product(*[range(zs[w].size) for w in range(wlast)])
            for zhead in head:
                ok2 = True
                for w, zk in enumerate(zhead):
                    for u in range(graph_.nu):
                        if not muw[(u, w)][xv[u], zk]:
                            ok2 = False
                    for v in range(graph_.nv):
                        if not mvw[(v, w)][yv[v], zk]:
                            ok2 = False
                    if not ok2:
                        break
                if ok2:
                    for w, zk in enumerate(zhead):
                        for u in range(graph_.nu):
                            for v in range(graph_.nv):
                                zi = int(zs[w][zk])
                                s = sp.add(sp.add(int(xs[u][xv[u]]), int(ys[v][yv[v]])), zi)
                                if member[s] != want[(u, v, w)]:
                                    ok2 = False
                if not ok2:
                    continue
                # vectorize the final z vertex
                mask = np.ones(zs[wlast].size, dtype=bool)
                for u in range(graph_.nu):
                    mask &= muw[(u, wlast)][xv[u]]
                for v in range(graph_.nv):
                    mask &= mvw[(v, wlast)][yv[v]]
                for u in range(graph_.nu):
                    for v in range(graph_.nv):
                        base = sp.add(int(xs[u][xv[u]]), int(ys[v][yv[v]]))
                        sums = sp.add(np.full(zs[wlast].size, base, dtype=np.int64), zs[wlast])
                        mask &= member[sums] == want[(u, v, wlast)]
                total += int(mask.sum())
    return total


def ternary_normalization(graph: PatternHypergraph, factor: QuadraticFactor,
                          e: LabelAssignment) -> Fraction:
    """The exact factor turning T_F(e)(1_A | 1_A^c) into the witness count:
    product of all atom sizes times product over pairs of |beta| / p^(2n)."""
    from .factor import beta_sizes_cached

    ctx = _TernaryContext(graph, factor, e)
    out = Fraction(1)
    for arr in (*ctx.xs, *ctx.ys, *ctx.zs):
        out *= arr.size
    if factor.q > 0:
        sizes = beta_sizes_cached(factor)
        p2n = factor.p ** (2 * factor.n)
        for d in (*e.duv.values(), *e.duw.values(), *e.dvw.values()):
            out *= Fraction(sizes[tuple(int(v) % factor.p for v in d)], p2n)
    return out


def bipartite_normalization(graph: PatternHypergraph, linear: LinearFactor) -> int:
    """|L(0)|^(|U| + |V|): the factor turning T_F(d) into the witness count."""
    return (linear.p ** (linear.n - linear.ell)) ** (graph.nu + graph.nv)


# ---------------------------------------------------------------------------
# weighted ternary density
# ---------------------------------------------------------------------------

def weighted_ternary_density(factor: QuadraticFactor, d: DirectionTuple3,
                             member: np.ndarray) -> tuple[float, float]:
    """E over the three atoms of 1_A(x + y + z) mu(x,y) mu(x,z) mu(y,z),
    together with the plain density of A on the target atom B(sigma3(d))."""
    from .local_norms import LocalContext3

    ctx = LocalContext3(factor, d)
    member = np.asarray(member, dtype=bool)
    sp = factor.space
    sums = sp.sum_grid3(ctx.xs, ctx.ys, ctx.zs)
    weights = ctx.mu12[:, :, None] * ctx.mu13[:, None, :] * ctx.mu23[None, :, :]
    value = float((weights * member[sums]).mean())
    target = ctx.target_indices()
    if target.size == 0:
        raise EmptyAtom(f"target atom {ctx.sigma.values} is empty")
    alpha = float(member[target].mean())
    return value, alpha

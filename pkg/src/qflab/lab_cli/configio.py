"""JSON schemas for configs: factors, sets, directions, pattern graphs.

All parsers raise ConfigError on malformed input so the CLI can map every
configuration problem to exit code 2. The set-spec kinds are:

    explicit      {"kind": "explicit", "indices": [0, 4, ...]}
    bitmask_hex   {"kind": "bitmask_hex", "hex": "1f02..."}  (little-endian)
    atom          {"kind": "atom", "factor": {...}, "label": [..]}
    atom_union    {"kind": "atom_union", "factor": {...}, "labels": [[..], ..]}
    random        {"kind": "random", "density": 0.5, "seed": 7}
    coset_union   {"kind": "coset_union", "subgroup_basis": [[..]], "reps": [[..]]}

A factor spec is {"p": 3, "n": 4, "linear": [[row], ...], "quadratic":
[[[matrix row], ...], ...]}. A direction spec is {"a": [a1, a2, a3],
"b": [b12, b13, b23]} with the pair order (12), (13), (23) fixed. A pattern
graph spec is {"parts": {"U": 2, "V": 2, "W": 16}, "edges": [[u, v, w], ...]}
(drop the "W" part and the third edge coordinate for the bipartite case).
"""

from __future__ import annotations

import json

import numpy as np

from ..combinatorics import SubsetBitmask
from ..errors import ConfigError, QflabError
from ..factor import (
    DirectionTuple2,
    DirectionTuple3,
    QuadraticFactor,
    new_linear_factor,
    new_quadratic_factor,
)
from ..fpn_core import GroupVector, rank_mod_p, space
from ..pattern_ops import PatternHypergraph


def load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def _int_list(obj, what: str) -> list[int]:
    if not isinstance(obj, (list, tuple)) or not all(isinstance(v, int) for v in obj):
        raise ConfigError(f"{what} must be a list of integers, got {obj!r}")
    return list(obj)


def parse_factor(spec: dict) -> QuadraticFactor:
    if not isinstance(spec, dict):
        raise ConfigError("factor spec must be an object")
    try:
        p = int(spec["p"])
        n = int(spec["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"factor spec needs integer p and n: {exc}") from exc
    linear_rows = spec.get("linear", [])
    forms = spec.get("quadratic", [])
    try:
        lin = new_linear_factor(p, n, [tuple(_int_list(r, "linear row")) for r in linear_rows])
        return new_quadratic_factor(lin, [np.array(m, dtype=np.int64) for m in forms])
    except ConfigError:
        raise
    except (QflabError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad factor spec: {exc}") from exc


def _span_indices(p: int, n: int, basis: list[tuple[int, ...]]) -> np.ndarray:
    """All canonical indices in the span of the given independent rows."""
    rows = np.array(basis, dtype=np.int64).reshape(len(basis), n)
    if len(basis) and rank_mod_p(rows, p) != len(basis):
        raise ConfigError("coset_union subgroup basis is dependent")
    sp = space(p, n)
    k = len(basis)
    coeffs = space(p, k).digits.astype(np.int64) if k else np.zeros((1, 0), dtype=np.int64)
    pts = (coeffs @ rows) % p if k else np.zeros((1, n), dtype=np.int64)
    return pts @ sp.powers


def parse_set(spec: dict, p: int, n: int) -> SubsetBitmask:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("set spec must be an object with a 'kind' field")
    kind = spec["kind"]
    size = p ** n
    try:
        if kind == "explicit":
            return SubsetBitmask.from_indices(p, n, _int_list(spec["indices"], "indices"))
        if kind == "bitmask_hex":
            return SubsetBitmask.from_hex(p, n, str(spec["hex"]))
        if kind == "atom":
            factor = parse_factor(spec["factor"])
            if (factor.p, factor.n) != (p, n):
                raise ConfigError("atom factor lives in a different group")
            return SubsetBitmask.from_indices(
                p, n, factor.atom_indices(tuple(_int_list(spec["label"], "label"))))
        if kind == "atom_union":
            factor = parse_factor(spec["factor"])
            if (factor.p, factor.n) != (p, n):
                raise ConfigError("atom_union factor lives in a different group")
            idx: list[int] = []
            for lab in spec["labels"]:
                idx.extend(int(i) for i in factor.atom_indices(tuple(_int_list(lab, "label"))))
            return SubsetBitmask.from_indices(p, n, idx)
        if kind == "random":
            density = float(spec["density"])
            if not 0.0 <= density <= 1.0:
                raise ConfigError("random set density must lie in [0, 1]")
            rng = np.random.default_rng(int(spec["seed"]))
            return SubsetBitmask(p, n, rng.random(size) < density)
        if kind == "coset_union":
            basis = [tuple(_int_list(b, "basis row")) for b in spec["subgroup_basis"]]
            span = _span_indices(p, n, basis)
            sp = space(p, n)
            idx = []
            for rep in spec["reps"]:
                rep_idx = sp.index_of(_int_list(rep, "rep"))
                idx.extend(int(i) for i in sp.add(np.full_like(span, rep_idx), span))
            return SubsetBitmask.from_indices(p, n, idx)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, QflabError) as exc:
        raise ConfigError(f"bad {kind!r} set spec: {exc}") from exc
    raise ConfigError(f"unknown set kind {kind!r}")


def parse_direction2(spec: dict, p: int) -> DirectionTuple2:
    try:
        a = spec["a"]
        return DirectionTuple2(p, tuple(_int_list(a[0], "a1")), tuple(_int_list(a[1], "a2")))
    except ConfigError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad direction spec: {exc}") from exc


def parse_direction3(spec: dict, p: int) -> DirectionTuple3:
    try:
        a = spec["a"]
        b = spec["b"]
        return DirectionTuple3(
            p,
            tuple(_int_list(a[0], "a1")), tuple(_int_list(a[1], "a2")),
            tuple(_int_list(a[2], "a3")),
            tuple(_int_list(b[0], "b12")), tuple(_int_list(b[1], "b13")),
            tuple(_int_list(b[2], "b23")),
        )
    except ConfigError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad direction spec: {exc}") from exc


def parse_hypergraph(spec: dict) -> PatternHypergraph:
    if not isinstance(spec, dict):
        raise ConfigError("pattern graph spec must be an object")
    try:
        parts = {str(k): int(v) for k, v in spec["parts"].items()}
        kind = "ternary" if "W" in parts else "bipartite"
        edges = frozenset(tuple(int(c) for c in e) for e in spec["edges"])
        return PatternHypergraph(kind, parts, edges)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, QflabError) as exc:
        raise ConfigError(f"bad pattern graph spec: {exc}") from exc

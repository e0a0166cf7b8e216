"""Exact COUNT(*) evaluation of SPJ queries over in-memory relations."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from .errors import CapacityError, DataError
from .querygen import LabeledExample, SpjQuery, WorkloadGroup
from .relstore import Database, Relation

MAX_SUBSET_TABLES = 8

__all__ = [
    "LabeledExample",
    "WorkloadGroup",
    "filtered_rows",
    "true_cardinality",
    "label_workload",
    "subquery_cards",
    "subset_key",
]


def _relations(relations: Database | Mapping[str, Relation]) -> Mapping[str, Relation]:
    return relations.relations if isinstance(relations, Database) else relations


def filtered_rows(rel: Relation, q: SpjQuery) -> np.ndarray:
    """Row indices of ``rel`` passing every filter of ``q`` on that table."""
    mask = np.ones(len(rel), dtype=bool)
    for f in q.filters:
        if f.column[0] == rel.name:
            mask &= f.op.holds(rel.column(f.column[1]), f.value)
    return np.flatnonzero(mask)


def _equijoin(left_keys: np.ndarray, right_keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs ``(i, j)`` with ``left_keys[i] == right_keys[j]``.

    Builds a key index (sorted keys plus run offsets) over the right input and
    probes it with every left key.
    """
    order = np.argsort(right_keys, kind="stable")
    sorted_keys = right_keys[order]
    lo = np.searchsorted(sorted_keys, left_keys, side="left")
    hi = np.searchsorted(sorted_keys, left_keys, side="right")
    counts = hi - lo
    total = int(counts.sum())
    left_idx = np.repeat(np.arange(len(left_keys)), counts)
    # position of each output pair inside its left key's run
    run_start = np.repeat(np.cumsum(counts) - counts, counts)
    offsets = np.arange(total) - run_start
    right_idx = order[np.repeat(lo, counts) + offsets]
    return left_idx, right_idx


def _evaluate(rels: Mapping[str, Relation], q: SpjQuery, base: Mapping[str, np.ndarray]) -> int:
    """Left-deep join in ascending filtered-size order; counts the result."""
    sizes = {t: len(base[t]) for t in q.tables}
    if any(s == 0 for s in sizes.values()):
        return 0
    if len(q.tables) == 1:
        return sizes[next(iter(q.tables))]
    adj = q.adjacency()
    first = min(q.tables, key=lambda t: (sizes[t], t))
    # intermediate result: one array of base row ids per joined table
    inter = {first: base[first]}
    while len(inter) < len(q.tables):
        nxt = min((t for t in q.tables if t not in inter and adj[t] & inter.keys()), key=lambda t: (sizes[t], t))
        preds = [j for j in q.joins if nxt in j.tables and (set(j.tables) - {nxt}) <= inter.keys()]
        j0, rest = preds[0], preds[1:]
        mine, theirs = (j0.child, j0.parent) if j0.child[0] == nxt else (j0.parent, j0.child)
        probe = rels[theirs[0]].column(theirs[1])[inter[theirs[0]]]
        build = rels[nxt].column(mine[1])[base[nxt]]
        li, ri = _equijoin(probe, build)
        inter = {t: ids[li] for t, ids in inter.items()}
        inter[nxt] = base[nxt][ri]
        for j in rest:  # only on cyclic join graphs
            a = rels[j.child[0]].column(j.child[1])[inter[j.child[0]]]
            b = rels[j.parent[0]].column(j.parent[1])[inter[j.parent[0]]]
            keep = a == b
            inter = {t: ids[keep] for t, ids in inter.items()}
        if len(inter[nxt]) == 0:
            return 0
    return len(inter[first])


def true_cardinality(relations: Database | Mapping[str, Relation], q: SpjQuery) -> int:
    rels = _relations(relations)
    missing = q.tables - rels.keys()
    if missing:
        raise DataError(f"no relation for tables {sorted(missing)}")
    base = {t: filtered_rows(rels[t], q) for t in q.tables}
    return _evaluate(rels, q, base)


def label_workload(
    relations: Database | Mapping[str, Relation],
    queries: Sequence[SpjQuery],
    group_name: str = "",
    schema_ref: str = "",
) -> WorkloadGroup:
    examples = []
    for i, q in enumerate(queries):
        try:
            examples.append(LabeledExample(q, true_cardinality(relations, q)))
        except Exception as exc:
            raise type(exc)(f"query {i}: {exc}") from exc
    return WorkloadGroup(group_name, schema_ref or group_name, examples)


def subset_key(tables) -> tuple[str, ...]:
    return tuple(sorted(tables))


def connected_subsets(q: SpjQuery) -> list[tuple[str, ...]]:
    """Every non-empty connected table subset, ordered by (size, sorted names)."""
    names = q.sorted_tables
    if len(names) > MAX_SUBSET_TABLES:
        raise CapacityError(f"{len(names)} tables exceed the subset bound of {MAX_SUBSET_TABLES}")
    out = []
    for mask in range(1, 1 << len(names)):
        subset = [names[i] for i in range(len(names)) if mask >> i & 1]
        if q.is_connected(subset):
            out.append(tuple(subset))
    out.sort(key=lambda s: (len(s), s))
    return out


def subquery_cards(relations: Database | Mapping[str, Relation], q: SpjQuery) -> dict[tuple[str, ...], int]:
    """Exact cardinality of every connected subquery of ``q``."""
    rels = _relations(relations)
    subsets = connected_subsets(q)
    base = {t: filtered_rows(rels[t], q) for t in q.tables}
    return {s: _evaluate(rels, q.restrict(s), base) for s in subsets}

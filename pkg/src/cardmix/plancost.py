"""Join-order planner and cost model used to score cardinality estimates.

Plans are bushy trees over FK-connected table subsets.  The cost of a plan
under a cardinality set is the symmetric hash-join recurrence::

    leaf(T)   = c_scan * base_rows(T) + c_out * C[T]
    join(L,R) = cost(L) + cost(R) + c_build * C[R] + c_probe * C[L] + c_out * C[L+R]
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from .errors import CapacityError, ConfigError, IncompleteCardinalityError
from .oracle import MAX_SUBSET_TABLES, connected_subsets, subset_key
from .querygen import SpjQuery


@dataclass(frozen=True)
class CostParams:
    c_scan: float = 1.0
    c_build: float = 1.0
    c_probe: float = 1.0
    c_out: float = 1.0

    def __post_init__(self):
        if min(self.c_scan, self.c_build, self.c_probe, self.c_out) <= 0:
            raise ConfigError("cost constants must be positive")

    def scaled(self, k: float) -> CostParams:
        return CostParams(self.c_scan * k, self.c_build * k, self.c_probe * k, self.c_out * k)


@dataclass(frozen=True)
class CardinalitySet:
    """Cardinality of every connected subquery, keyed by sorted table tuple.

    ``base_rows`` holds unfiltered table sizes for the scan term.
    """

    cards: Mapping[tuple[str, ...], float]
    base_rows: Mapping[str, int] = field(default_factory=dict)

    def __getitem__(self, tables) -> float:
        key = subset_key(tables)
        try:
            return float(self.cards[key])
        except KeyError:
            raise IncompleteCardinalityError(f"no cardinality for subset {key}") from None

    def rows(self, table: str) -> int:
        try:
            return max(int(self.base_rows[table]), 1)
        except KeyError:
            raise IncompleteCardinalityError(f"no base row count for {table}") from None

    def covers(self, q: SpjQuery) -> bool:
        return all(s in self.cards for s in connected_subsets(q)) and all(t in self.base_rows for t in q.tables)


@dataclass(frozen=True)
class PlanTree:
    tables: frozenset[str]
    left: PlanTree | None = None
    right: PlanTree | None = None

    @classmethod
    def leaf(cls, table: str) -> PlanTree:
        return cls(frozenset([table]))

    @classmethod
    def join(cls, left: PlanTree, right: PlanTree) -> PlanTree:
        return cls(left.tables | right.tables, left, right)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def serialize(self) -> str:
        if self.is_leaf:
            return next(iter(self.tables))
        return f"({self.left.serialize()} {self.right.serialize()})"

    __str__ = serialize

    def nodes(self) -> Iterator[PlanTree]:
        yield self
        if not self.is_leaf:
            yield from self.left.nodes()
            yield from self.right.nodes()


def enumerate_connected_subsets(q: SpjQuery) -> list[tuple[str, ...]]:
    return connected_subsets(q)


def _linked(q: SpjQuery, a: frozenset[str], b: frozenset[str]) -> bool:
    return any((j.child[0] in a and j.parent[0] in b) or (j.child[0] in b and j.parent[0] in a) for j in q.joins)


def ppc(plan: PlanTree, C: CardinalitySet, cp: CostParams = CostParams()) -> float:
    if plan.is_leaf:
        (t,) = plan.tables
        return cp.c_scan * C.rows(t) + cp.c_out * C[plan.tables]
    return (
        ppc(plan.left, C, cp)
        + ppc(plan.right, C, cp)
        + cp.c_build * C[plan.right.tables]
        + cp.c_probe * C[plan.left.tables]
        + cp.c_out * C[plan.tables]
    )


def validate_plan(plan: PlanTree, q: SpjQuery) -> None:
    """Raise ``ValueError`` unless ``plan`` is a valid plan for ``q``."""
    if plan.tables != q.tables:
        raise ValueError(f"plan covers {sorted(plan.tables)}, query has {q.sorted_tables}")
    leaves = [n for n in plan.nodes() if n.is_leaf]
    if len(leaves) != len(q.tables):
        raise ValueError("plan repeats a table")
    for node in plan.nodes():
        if node.is_leaf:
            continue
        if node.left.tables & node.right.tables:
            raise ValueError("overlapping join inputs")
        for side in (node.left, node.right):
            if not q.is_connected(side.tables):
                raise ValueError(f"disconnected join input {sorted(side.tables)}")
        if not _linked(q, node.left.tables, node.right.tables):
            raise ValueError("join without a foreign-key edge (cartesian product)")


def optimal_plan(q: SpjQuery, C: CardinalitySet, cp: CostParams = CostParams()) -> PlanTree:
    """Cheapest bushy plan under ``C`` by dynamic programming over subsets.

    Ties prefer the left input with the smaller bitmask (bit i is the i-th
    table in sorted order), then the lexicographically smaller serialization.
    """
    names = q.sorted_tables
    if len(names) > MAX_SUBSET_TABLES:
        raise CapacityError(f"{len(names)} tables exceed the planner bound of {MAX_SUBSET_TABLES}")
    bit = {t: 1 << i for i, t in enumerate(names)}

    def mask_of(tables) -> int:
        return sum(bit[t] for t in tables)

    def tables_of(mask: int) -> frozenset[str]:
        return frozenset(t for t in names if mask & bit[t])

    best: dict[int, tuple[float, PlanTree]] = {}
    for subset in connected_subsets(q):
        mask = mask_of(subset)
        if len(subset) == 1:
            leaf = PlanTree.leaf(subset[0])
            best[mask] = (ppc(leaf, C, cp), leaf)
            continue
        here = C[subset]
        choice = None
        sub = (mask - 1) & mask
        while sub:
            other = mask ^ sub
            if sub in best and other in best and _linked(q, tables_of(sub), tables_of(other)):
                lcost, lplan = best[sub]
                rcost, rplan = best[other]
                cost = lcost + rcost + cp.c_build * C[rplan.tables] + cp.c_probe * C[lplan.tables] + cp.c_out * here
                plan = PlanTree.join(lplan, rplan)
                key = (cost, sub, plan.serialize())
                if choice is None or key < choice[0]:
                    choice = (key, plan)
            sub = (sub - 1) & mask
        best[mask] = (choice[0][0], choice[1])
    return best[mask_of(names)][1]


def p_error(q: SpjQuery, C_E: CardinalitySet, C_T: CardinalitySet, cp: CostParams = CostParams()) -> float:
    """Cost under true cardinalities of the plan picked with estimates,
    relative to the plan picked with true cardinalities."""
    chosen = optimal_plan(q, C_E, cp)
    ideal = optimal_plan(q, C_T, cp)
    return ppc(chosen, C_T, cp) / ppc(ideal, C_T, cp)

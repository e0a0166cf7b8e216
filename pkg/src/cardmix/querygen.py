"""Select-project-join COUNT(*) queries: model, random workloads, SQL text.

Only conjunctive filters ``t.c op INT`` and PK-FK equijoins are supported.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ConnectivityError,
    DataError,
    GenerationError,
    ParseError,
    ResolutionError,
    UnsupportedJoinError,
)
from .relstore import ForeignKey, Schema, SchemaStats


class Op(Enum):
    EQ = "="
    LT = "<"
    GT = ">"
    LE = "<="
    GE = ">="

    def holds(self, values: np.ndarray, v: int) -> np.ndarray:
        if self is Op.EQ:
            return values == v
        if self is Op.LT:
            return values < v
        if self is Op.GT:
            return values > v
        if self is Op.LE:
            return values <= v
        return values >= v


OPS = tuple(Op)


@dataclass(frozen=True)
class FilterPred:
    column: tuple[str, str]
    op: Op
    value: int

    def sql(self) -> str:
        return f"{self.column[0]}.{self.column[1]} {self.op.value} {self.value}"


@dataclass(frozen=True, order=True)
class JoinPred:
    child: tuple[str, str]
    parent: tuple[str, str]

    @classmethod
    def of(cls, fk: ForeignKey) -> JoinPred:
        return cls(tuple(fk.child), tuple(fk.parent))

    def sql(self) -> str:
        return f"{self.child[0]}.{self.child[1]} = {self.parent[0]}.{self.parent[1]}"

    @property
    def tables(self) -> tuple[str, str]:
        return self.child[0], self.parent[0]


@dataclass(frozen=True)
class SpjQuery:
    tables: frozenset[str]
    joins: frozenset[JoinPred] = frozenset()
    filters: tuple[FilterPred, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tables", frozenset(self.tables))
        object.__setattr__(self, "joins", frozenset(self.joins))
        object.__setattr__(self, "filters", tuple(self.filters))

    @property
    def sorted_tables(self) -> list[str]:
        return sorted(self.tables)

    def adjacency(self) -> dict[str, set[str]]:
        adj = {t: set() for t in self.tables}
        for j in self.joins:
            a, b = j.tables
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def is_connected(self, subset: Iterable[str] | None = None) -> bool:
        nodes = set(self.tables if subset is None else subset)
        if not nodes:
            return False
        adj = self.adjacency()
        start = next(iter(nodes))
        seen, stack = {start}, [start]
        while stack:
            for nb in adj[stack.pop()] & nodes:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen == nodes

    def restrict(self, subset: Iterable[str]) -> SpjQuery:
        """The subquery induced by ``subset``: its joins and filters only."""
        keep = frozenset(subset)
        return SpjQuery(
            keep,
            frozenset(j for j in self.joins if set(j.tables) <= keep),
            tuple(f for f in self.filters if f.column[0] in keep),
        )

    def validate(self, schema: Schema | None = None) -> None:
        if not self.tables:
            raise DataError("query references no tables")
        for j in self.joins:
            if not set(j.tables) <= self.tables:
                raise DataError(f"join {j.sql()} references a table outside the FROM list")
        for f in self.filters:
            if f.column[0] not in self.tables:
                raise DataError(f"filter {f.sql()} references a table outside the FROM list")
        if not self.is_connected():
            raise ConnectivityError(f"tables {self.sorted_tables} are not connected by the join predicates")
        if schema is not None:
            fks = {JoinPred.of(fk) for fk in schema.fks}
            for j in self.joins:
                if j not in fks:
                    raise UnsupportedJoinError(f"{j.sql()} is not a declared foreign key")
            for f in self.filters:
                if not schema.has_column(*f.column):
                    raise ResolutionError(f"unknown column {f.column[0]}.{f.column[1]}")


# ---------------------------------------------------------------------------
# SQL emission
# ---------------------------------------------------------------------------


def to_sql(q: SpjQuery) -> str:
    text = "SELECT COUNT(*) FROM " + ", ".join(q.sorted_tables)
    conjuncts = sorted(j.sql() for j in q.joins) + [f.sql() for f in q.filters]
    if conjuncts:
        text += " WHERE " + " AND ".join(conjuncts)
    return text


# ---------------------------------------------------------------------------
# SQL parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><=|>=|=|<|>)|(?P<punct>[(),.*]))"
)
_KEYWORDS = {"select", "count", "from", "where", "and"}


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens, pos = [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", position=pos)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if kind == "ident" and value.lower() in _KEYWORDS:
            kind, value = "kw", value.lower()
        tokens.append(_Token(kind, value, start))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, schema: Schema):
        self.tokens = _tokenize(text)
        self.i = 0
        self.schema = schema
        self.fk_by_pair = {(fk.child, fk.parent): fk for fk in schema.fks}

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def expect(self, kind: str, text: str | None = None) -> _Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", position=t.pos)
        self.i += 1
        return t

    def parse(self) -> SpjQuery:
        self.expect("kw", "select")
        self.expect("kw", "count")
        self.expect("punct", "(")
        self.expect("punct", "*")
        self.expect("punct", ")")
        self.expect("kw", "from")
        tables = [self.table_name()]
        while self.tok.kind == "punct" and self.tok.text == ",":
            self.i += 1
            tables.append(self.table_name())
        names = [t for t, _ in tables]
        if len(set(names)) != len(names):
            dup = next(tok for (t, tok) in tables if names.count(t) > 1)
            raise ParseError(f"table {dup.text!r} listed twice", position=dup.pos)
        in_from = set(names)
        joins, filters = set(), []
        if self.tok.kind == "kw" and self.tok.text == "where":
            self.i += 1
            self.conjunct(in_from, joins, filters)
            while self.tok.kind == "kw" and self.tok.text == "and":
                self.i += 1
                self.conjunct(in_from, joins, filters)
        self.expect("eof")
        q = SpjQuery(frozenset(names), frozenset(joins), tuple(filters))
        if not q.is_connected():
            raise ConnectivityError(f"tables {q.sorted_tables} are not connected by the join predicates")
        return q

    def table_name(self) -> tuple[str, _Token]:
        t = self.expect("ident")
        if t.text not in self.schema.table_names:
            raise ResolutionError(f"unknown table {t.text!r}", position=t.pos)
        return t.text, t

    def column_ref(self, in_from: set[str]) -> tuple[tuple[str, str], _Token]:
        t = self.expect("ident")
        self.expect("punct", ".")
        c = self.expect("ident")
        if t.text not in in_from:
            raise ResolutionError(f"table {t.text!r} is not in the FROM list", position=t.pos)
        if not self.schema.has_column(t.text, c.text):
            raise ResolutionError(f"unknown column {t.text}.{c.text!r}", position=c.pos)
        return (t.text, c.text), t

    def conjunct(self, in_from, joins, filters) -> None:
        left, start = self.column_ref(in_from)
        op_tok = self.expect("op")
        op = Op(op_tok.text)
        if self.tok.kind == "num":
            value = int(self.expect("num").text)
            filters.append(FilterPred(left, op, value))
            return
        if self.tok.kind != "ident":
            raise ParseError(f"expected integer or column, found {self.tok.text or 'end of input'!r}", position=self.tok.pos)
        right, _ = self.column_ref(in_from)
        if op is not Op.EQ:
            raise UnsupportedJoinError(f"join predicates must be equalities, found {op.value!r}", position=op_tok.pos)
        fk = self.fk_by_pair.get((left, right)) or self.fk_by_pair.get((right, left))
        if fk is None:
            raise UnsupportedJoinError(
                f"{left[0]}.{left[1]} = {right[0]}.{right[1]} is not a declared foreign key", position=start.pos
            )
        joins.add(JoinPred.of(fk))


def parse_sql(text: str, schema: Schema) -> SpjQuery:
    return _Parser(text, schema).parse()


# ---------------------------------------------------------------------------
# workload generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadConfig:
    max_tables: int = 3
    max_filters: int = 3
    op_mix: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)  # EQ, LT, GT, LE, GE
    filter_keys: bool = False

    @classmethod
    def from_dict(cls, doc: Mapping) -> WorkloadConfig:
        doc = dict(doc)
        if "op_mix" in doc:
            mix = doc["op_mix"]
            if isinstance(mix, Mapping):
                mix = [float(mix.get(op.name, 0.0)) for op in OPS]
            doc["op_mix"] = tuple(float(x) for x in mix)
        return cls(**doc)


def _connected_sample(rng: np.random.Generator, adj: Mapping[str, set[str]], order: Sequence[str], size: int, start: str) -> list[str]:
    chosen = [start]
    frontier = set(adj[start])
    while len(chosen) < size:
        candidates = [t for t in order if t in frontier]
        nxt = candidates[rng.integers(len(candidates))]
        chosen.append(nxt)
        frontier |= adj[nxt]
        frontier -= set(chosen)
    return chosen


def gen_workload(schema: Schema, stats: SchemaStats, n: int, cfg: WorkloadConfig, seed: int) -> list[SpjQuery]:
    """``n`` random connected SPJ queries; deterministic in ``(inputs, seed)``."""
    if n < 1:
        raise GenerationError("workload size must be at least 1")
    if not 1 <= cfg.max_tables <= len(schema.tables):
        raise GenerationError(f"max_tables {cfg.max_tables} outside [1, {len(schema.tables)}]")
    mix = np.asarray(cfg.op_mix, dtype=np.float64)
    if mix.shape != (5,) or (mix < 0).any() or mix.sum() <= 0:
        raise GenerationError("op_mix needs five non-negative weights with a positive sum")
    mix = mix / mix.sum()
    order = schema.table_names
    adj = schema.neighbors()
    comp_of = {}
    for comp in schema.components():
        for t in comp:
            comp_of[t] = comp
    if cfg.max_tables > max(len(c) for c in comp_of.values()):
        raise GenerationError(f"max_tables {cfg.max_tables} exceeds the largest connected component")

    key_cols = {fk.child for fk in schema.fks} | {(t.name, t.primary_key) for t in schema.tables}
    filterable = {}
    for t in schema.tables:
        cols = [(t.name, c.name) for c in t.columns]
        if not cfg.filter_keys:
            cols = [c for c in cols if c not in key_cols] or cols
        filterable[t.name] = cols

    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(n):
        size = int(rng.integers(1, cfg.max_tables + 1))
        starts = [t for t in order if len(comp_of[t]) >= size]
        start = starts[rng.integers(len(starts))]
        tables = _connected_sample(rng, adj, order, size, start)
        chosen = set(tables)
        joins = frozenset(JoinPred.of(fk) for fk in schema.fks if fk.child[0] in chosen and fk.parent[0] in chosen)
        cols = [c for t in sorted(chosen) for c in filterable[t]]
        filters = []
        for _ in range(int(rng.integers(0, cfg.max_filters + 1))):
            col = cols[rng.integers(len(cols))]
            op = OPS[rng.choice(5, p=mix)]
            st = stats.column(*col)
            value = int(rng.integers(st.min, st.max + 1))
            filters.append(FilterPred(col, op, value))
        queries.append(SpjQuery(frozenset(chosen), joins, tuple(filters)))
    return queries


# ---------------------------------------------------------------------------
# workload files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledExample:
    query: SpjQuery
    cardinality: int


@dataclass
class WorkloadGroup:
    group_name: str
    schema_ref: str
    examples: list[LabeledExample] = field(default_factory=list)

    def __len__(self):
        return len(self.examples)

    @property
    def queries(self) -> list[SpjQuery]:
        return [ex.query for ex in self.examples]

    @property
    def cards(self) -> np.ndarray:
        return np.array([ex.cardinality for ex in self.examples], dtype=np.int64)


def workload_lines(group: str, queries: Sequence[SpjQuery], cards: Sequence[int | None] | None = None) -> str:
    cards = cards if cards is not None else [None] * len(queries)
    return "".join(json.dumps({"group": group, "sql": to_sql(q), "card": c}) + "\n" for q, c in zip(queries, cards))


def write_workload(path: str | Path, group: str, queries: Sequence[SpjQuery], cards: Sequence[int | None] | None = None) -> None:
    Path(path).write_text(workload_lines(group, queries, cards), encoding="utf-8", newline="\n")


def read_workload(path: str | Path, schema: Schema) -> list[tuple[str, SpjQuery, int | None]]:
    """Rows of ``(group, query, card)``; ``card`` is ``None`` when unlabeled."""
    out = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read workload {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            group, sql, card = rec["group"], rec["sql"], rec.get("card")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad workload record: {exc}", line=line_no) from exc
        try:
            q = parse_sql(sql, schema)
        except ParseError as exc:
            raise type(exc)(f"{path}:{line_no}: {exc}") from exc
        out.append((group, q, None if card is None else int(card)))
    return out

"""In-memory relational storage, synthetic data generation and column statistics.

All attribute values are integers.  A :class:`Relation` keeps its rows as a
read-only ``int64`` matrix with one column per :class:`ColumnDef`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IntegrityError, ParseError

KINDS = ("numeric-integer", "categorical-integer")
TOPOLOGIES = ("star", "snowflake", "chain")
DEFAULT_BUCKETS = 16


# ---------------------------------------------------------------------------
# schema objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnDef:
    name: str
    lo: int
    hi: int
    kind: str = "numeric-integer"

    def __post_init__(self):
        if self.lo > self.hi:
            raise ConfigError(f"column {self.name}: empty domain [{self.lo}, {self.hi}]")
        if self.kind not in KINDS:
            raise ConfigError(f"column {self.name}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: str

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError(f"table {self.name}: duplicate column names")
        if self.primary_key not in names:
            raise ConfigError(f"table {self.name}: primary key {self.primary_key!r} is not a column")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"{self.name}.{name}")

    def column(self, name: str) -> ColumnDef:
        return self.columns[self.column_index(name)]


@dataclass(frozen=True)
class ForeignKey:
    child: tuple[str, str]
    parent: tuple[str, str]

    def __str__(self):
        return f"{self.child[0]}.{self.child[1]} -> {self.parent[0]}.{self.parent[1]}"


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]
    fks: tuple[ForeignKey, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "fks", tuple(self.fks))
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate table names in schema")
        by_name = {t.name: t for t in self.tables}
        for fk in self.fks:
            for end in (fk.child, fk.parent):
                if end[0] not in by_name or end[1] not in by_name[end[0]].column_names:
                    raise ConfigError(f"foreign key {fk}: unknown endpoint {end[0]}.{end[1]}")
            if fk.child[0] == fk.parent[0]:
                raise ConfigError(f"foreign key {fk}: self-loop")
            if by_name[fk.parent[0]].primary_key != fk.parent[1]:
                raise ConfigError(f"foreign key {fk}: parent column is not the primary key")

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def has_column(self, table: str, column: str) -> bool:
        try:
            return column in self.table(table).column_names
        except KeyError:
            return False

    def fks_between(self, a: str, b: str) -> list[ForeignKey]:
        return [fk for fk in self.fks if {fk.child[0], fk.parent[0]} == {a, b}]

    def neighbors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {t.name: set() for t in self.tables}
        for fk in self.fks:
            adj[fk.child[0]].add(fk.parent[0])
            adj[fk.parent[0]].add(fk.child[0])
        return adj

    def components(self) -> list[set[str]]:
        adj = self.neighbors()
        seen: set[str] = set()
        out = []
        for name in self.table_names:
            if name in seen:
                continue
            comp, stack = set(), [name]
            while stack:
                t = stack.pop()
                if t in comp:
                    continue
                comp.add(t)
                stack.extend(adj[t] - comp)
            seen |= comp
            out.append(comp)
        return out

    def to_dict(self) -> dict:
        return {
            "tables": [
                {
                    "name": t.name,
                    "columns": [{"name": c.name, "kind": c.kind, "lo": c.lo, "hi": c.hi} for c in t.columns],
                    "pk": t.primary_key,
                }
                for t in self.tables
            ],
            "fks": [{"child": f"{fk.child[0]}.{fk.child[1]}", "parent": f"{fk.parent[0]}.{fk.parent[1]}"} for fk in self.fks],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> Schema:
        try:
            tables = [
                TableDef(
                    t["name"],
                    tuple(ColumnDef(c["name"], int(c["lo"]), int(c["hi"]), c.get("kind", "numeric-integer")) for c in t["columns"]),
                    t["pk"],
                )
                for t in doc["tables"]
            ]
            fks = [ForeignKey(_split_ref(f["child"]), _split_ref(f["parent"])) for f in doc.get("fks", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed schema document: {exc}") from exc
        return cls(tuple(tables), tuple(fks))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _split_ref(ref: str) -> tuple[str, str]:
    table, sep, column = ref.partition(".")
    if not sep or not table or not column:
        raise ValueError(f"column reference {ref!r} is not of the form table.column")
    return table, column


def load_schema(path: str | Path) -> Schema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc
    return Schema.from_dict(doc)


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Relation:
    table: TableDef
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64, copy=True)
        if rows.size == 0:
            rows = rows.reshape(0, len(self.table.columns))
        if rows.ndim != 2 or rows.shape[1] != len(self.table.columns):
            raise DataError(f"relation {self.table.name}: row matrix has shape {rows.shape}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        self._check()

    def _check(self):
        for j, col in enumerate(self.table.columns):
            values = self.rows[:, j]
            if len(values) and (values.min() < col.lo or values.max() > col.hi):
                raise IntegrityError(f"{self.table.name}.{col.name}: value outside declared domain [{col.lo}, {col.hi}]")
        pk = self.column(self.table.primary_key)
        if len(np.unique(pk)) != len(pk):
            raise IntegrityError(f"{self.table.name}: duplicate primary key values")

    @property
    def name(self) -> str:
        return self.table.name

    def __len__(self):
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.table.column_index(name)]

    def renamed(self, table: TableDef) -> Relation:
        """Same data under a different (column-compatible) definition."""
        return Relation(table, self.rows)


def check_referential_integrity(schema: Schema, relations: Mapping[str, Relation]) -> None:
    for fk in schema.fks:
        child = relations[fk.child[0]].column(fk.child[1])
        parent = relations[fk.parent[0]].column(fk.parent[1])
        if not np.isin(child, parent).all():
            raise IntegrityError(f"foreign key {fk}: dangling child values")


@dataclass(frozen=True, eq=False)
class Database:
    """A schema together with one relation per table."""

    schema: Schema
    relations: Mapping[str, Relation]

    def __post_init__(self):
        rels = dict(self.relations)
        missing = set(self.schema.table_names) - set(rels)
        if missing:
            raise DataError(f"no relation for tables {sorted(missing)}")
        check_referential_integrity(self.schema, rels)
        object.__setattr__(self, "relations", rels)

    def __getitem__(self, table: str) -> Relation:
        return self.relations[table]

    @property
    def total_rows(self) -> int:
        return sum(len(r) for r in self.relations.values())


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def load_csv(path: str | Path, table: TableDef) -> Relation:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_csv(text, table)


def parse_csv(text: str, table: TableDef) -> Relation:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    expected = table.column_names
    if header is None or [h.strip() for h in header] != expected:
        raise ParseError(f"header {header} does not match columns {expected}", line=1)
    width = len(expected)
    rows = []
    for line_no, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != width:
            raise ParseError(f"expected {width} fields, found {len(record)}", line=line_no)
        try:
            rows.append([int(cell) for cell in record])
        except ValueError as exc:
            raise ParseError(f"non-integer cell: {exc}", line=line_no) from exc
    return Relation(table, np.array(rows, dtype=np.int64).reshape(len(rows), width))


def dump_csv(rel: Relation) -> str:
    lines = [",".join(rel.table.column_names)]
    lines.extend(",".join(map(str, row)) for row in rel.rows.tolist())
    return "\n".join(lines) + "\n"


def write_csv(rel: Relation, path: str | Path) -> None:
    Path(path).write_text(dump_csv(rel), encoding="utf-8", newline="\n")


def load_database(directory: str | Path) -> Database:
    """Read ``schema.json`` and one ``<table>.csv`` per table from a directory."""
    directory = Path(directory)
    schema = load_schema(directory / "schema.json")
    rels = {t.name: load_csv(directory / f"{t.name}.csv", t) for t in schema.tables}
    return Database(schema, rels)


def write_database(db: Database, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "schema.json").write_text(db.schema.dumps(), encoding="utf-8")
    for name in db.schema.table_names:
        write_csv(db[name], directory / f"{name}.csv")


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    """How to draw one column.

    ``dist`` is ``uniform``, ``zipf`` (exponent ``s``, low values most
    frequent) or ``correlated`` (linear in ``source`` plus gaussian noise with
    standard deviation ``noise`` times the domain width).
    """

    name: str = ""
    dist: str = "uniform"
    lo: int = 0
    hi: int = 99
    s: float = 1.1
    source: str | None = None
    noise: float = 0.1
    kind: str = "numeric-integer"

    @classmethod
    def from_dict(cls, doc: Mapping) -> ColumnSpec:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown column spec keys {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class TableSpec:
    name: str
    rows: int
    columns: tuple[ColumnSpec, ...] = ()
    fk: ColumnSpec = field(default_factory=ColumnSpec)


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration for :func:`gen_synthetic`.

    ``fks`` lists ``(child_table, parent_table)`` pairs.  When empty the edges
    follow ``topology``: star makes the first table reference every other
    one, chain links consecutive tables, snowflake builds a binary tree rooted
    at the first table.  The child side gets a column ``<parent>_id`` drawn
    according to its table's ``fk`` spec (``source`` may name an attribute).
    """

    tables: tuple[TableSpec, ...]
    topology: str = "star"
    fks: tuple[tuple[str, str], ...] = ()

    @classmethod
    def compact(
        cls,
        n_tables: int,
        rows: int | Sequence[int],
        topology: str = "star",
        columns: Sequence[ColumnSpec | Mapping] = (),
        fk: ColumnSpec | Mapping | None = None,
        prefix: str = "t",
    ) -> GeneratorSpec:
        """Every table shares one column template; attributes are ``a0, a1, ...``."""
        if isinstance(rows, int):
            rows = [rows] * n_tables
        if len(rows) != n_tables:
            raise ConfigError(f"{len(rows)} row counts for {n_tables} tables")
        cols = []
        for i, c in enumerate(columns):
            c = ColumnSpec.from_dict(c) if isinstance(c, Mapping) else c
            cols.append(ColumnSpec(**{**c.to_dict(), "name": c.name or f"a{i}"}))
        fk_spec = ColumnSpec.from_dict(fk) if isinstance(fk, Mapping) else (fk or ColumnSpec())
        tables = tuple(TableSpec(f"{prefix}{i}", int(r), tuple(cols), fk_spec) for i, r in enumerate(rows))
        return cls(tables, topology)

    @classmethod
    def from_dict(cls, doc: Mapping) -> GeneratorSpec:
        try:
            if isinstance(doc.get("tables"), int):
                spec = cls.compact(
                    doc["tables"],
                    doc.get("rows", 1000),
                    doc.get("topology", "star"),
                    doc.get("columns", ()),
                    doc.get("fk"),
                    doc.get("prefix", "t"),
                )
            else:
                tables = tuple(
                    TableSpec(
                        t["name"],
                        int(t["rows"]),
                        tuple(ColumnSpec.from_dict(c) for c in t.get("columns", ())),
                        ColumnSpec.from_dict(t.get("fk", {})),
                    )
                    for t in doc["tables"]
                )
                spec = cls(tables, doc.get("topology", "star"))
            fks = tuple(tuple(pair) for pair in doc.get("fks", ()))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed generator spec: {exc}") from exc
        return cls(spec.tables, spec.topology, fks) if fks else spec

    def edges(self) -> list[tuple[str, str]]:
        names = [t.name for t in self.tables]
        if self.fks:
            for child, parent in self.fks:
                for t in (child, parent):
                    if t not in names:
                        raise ConfigError(f"foreign key references nonexistent table {t!r}")
            return [tuple(p) for p in self.fks]
        if self.topology == "star":
            return [(names[0], n) for n in names[1:]]
        if self.topology == "chain":
            return list(zip(names[:-1], names[1:]))
        if self.topology == "snowflake":
            return [(names[(i - 1) // 2], names[i]) for i in range(1, len(names))]
        raise ConfigError(f"unknown topology {self.topology!r}")

    def validate(self) -> None:
        if not 2 <= len(self.tables) <= 8:
            raise ConfigError(f"table count {len(self.tables)} outside [2, 8]")
        for t in self.tables:
            if not 10 <= t.rows <= 100_000:
                raise ConfigError(f"table {t.name}: rows {t.rows} outside [10, 100000]")
            for c in t.columns:
                if c.dist not in ("uniform", "zipf", "correlated"):
                    raise ConfigError(f"{t.name}.{c.name}: unknown distribution {c.dist!r}")
                if c.dist == "correlated" and not c.source:
                    raise ConfigError(f"{t.name}.{c.name}: correlated column needs a source")
        if len({t.name for t in self.tables}) != len(self.tables):
            raise ConfigError("duplicate table names in generator spec")
        edges = self.edges()
        if any(c == p for c, p in edges):
            raise ConfigError("self-referencing foreign key")
        if len(set(edges)) != len(edges):
            raise ConfigError("duplicate foreign key edge")


def _zipf_ranks(rng: np.random.Generator, width: int, s: float, size: int) -> np.ndarray:
    weights = np.arange(1, width + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, width - 1)


def _draw(rng, spec: ColumnSpec, lo: int, hi: int, n: int, done: dict[str, tuple[np.ndarray, int, int]]) -> np.ndarray:
    width = hi - lo + 1
    if spec.dist == "uniform":
        return rng.integers(lo, hi + 1, size=n)
    if spec.dist == "zipf":
        return lo + _zipf_ranks(rng, width, spec.s, n)
    src, src_lo, src_hi = done[spec.source]
    scaled = (src - src_lo) / max(src_hi - src_lo, 1)
    values = lo + np.rint(scaled * (width - 1) + rng.normal(0.0, spec.noise * width, size=n))
    return np.clip(values, lo, hi).astype(np.int64)


def _column_order(specs: dict[str, ColumnSpec], fixed: set[str], table: str) -> list[str]:
    order, state = [], {}

    def visit(name):
        if name in fixed or state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise ConfigError(f"table {table}: cyclic column correlation through {name!r}")
        if name not in specs:
            raise ConfigError(f"table {table}: correlation source {name!r} is not a column")
        state[name] = 1
        if specs[name].dist == "correlated":
            visit(specs[name].source)
        state[name] = 2
        order.append(name)

    for name in specs:
        visit(name)
    return order


def gen_synthetic(spec: GeneratorSpec, seed: int) -> tuple[Schema, list[Relation]]:
    """Generate a schema and its relations; a pure function of ``(spec, seed)``."""
    spec.validate()
    edges = spec.edges()
    rows = {t.name: t.rows for t in spec.tables}
    rng = np.random.default_rng(seed)

    table_defs, relations, fks = [], [], []
    for t in spec.tables:
        parents = [p for c, p in edges if c == t.name]
        n = t.rows
        specs: dict[str, ColumnSpec] = {}
        domains: dict[str, tuple[int, int]] = {"id": (0, n - 1)}
        for p in parents:
            specs[f"{p}_id"] = t.fk
            domains[f"{p}_id"] = (0, rows[p] - 1)
        for c in t.columns:
            if c.name in domains:
                raise ConfigError(f"table {t.name}: column name {c.name!r} collides with a key column")
            specs[c.name] = c
            domains[c.name] = (c.lo, c.hi)
        done: dict[str, tuple[np.ndarray, int, int]] = {"id": (np.arange(n, dtype=np.int64), 0, n - 1)}
        for name in _column_order(specs, {"id"}, t.name):
            lo, hi = domains[name]
            done[name] = (_draw(rng, specs[name], lo, hi, n, done).astype(np.int64), lo, hi)
        names = ["id"] + [f"{p}_id" for p in parents] + [c.name for c in t.columns]
        cols = tuple(ColumnDef(name, *domains[name], specs[name].kind if name in specs else "numeric-integer") for name in names)
        tdef = TableDef(t.name, cols, "id")
        table_defs.append(tdef)
        relations.append(Relation(tdef, np.column_stack([done[name][0] for name in names])))
        fks.extend(ForeignKey((t.name, f"{p}_id"), (p, "id")) for p in parents)

    schema = Schema(tuple(table_defs), tuple(fks))
    check_referential_integrity(schema, {r.name: r for r in relations})
    return schema, relations


def gen_database(spec: GeneratorSpec, seed: int) -> Database:
    schema, relations = gen_synthetic(spec, seed)
    return Database(schema, {r.name: r for r in relations})


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnStats:
    row_count: int
    min: int
    max: int
    ndv: int
    histogram: tuple[tuple[int, int], ...]

    def fraction_le(self, value: float) -> float:
        """Estimated fraction of rows with column value <= ``value``.

        Values are treated as spread evenly over each bucket's integer range
        ``(previous upper bound, upper bound]``.
        """
        if self.row_count == 0 or value < self.min:
            return 0.0
        if value >= self.max:
            return 1.0
        below, prev = 0, self.min - 1
        for upper, count in self.histogram:
            if value >= upper:
                below += count
                prev = upper
                continue
            inside = count * (value - prev) / (upper - prev)
            return (below + inside) / self.row_count
        return 1.0

    def bucket_of(self, value: int) -> tuple[int, int, int] | None:
        """``(lower_exclusive, upper, count)`` of the bucket covering ``value``."""
        if self.row_count == 0 or value < self.min or value > self.max:
            return None
        prev = self.min - 1
        for upper, count in self.histogram:
            if value <= upper:
                return prev, upper, count
            prev = upper
        return None

    def to_dict(self) -> dict:
        return {"row_count": self.row_count, "min": self.min, "max": self.max, "ndv": self.ndv, "histogram": [list(b) for b in self.histogram]}

    @classmethod
    def from_dict(cls, doc: Mapping) -> ColumnStats:
        return cls(doc["row_count"], doc["min"], doc["max"], doc["ndv"], tuple(tuple(b) for b in doc["histogram"]))


def equi_depth(values: np.ndarray, buckets: int) -> tuple[tuple[int, int], ...]:
    """Equi-depth histogram that never splits a value across buckets.

    Each bucket targets ``ceil(remaining / remaining_buckets)`` tuples and is
    then extended to swallow every copy of its boundary value.
    """
    if buckets < 1:
        raise ConfigError("histogram needs at least one bucket")
    v = np.sort(np.asarray(values, dtype=np.int64))
    n = len(v)
    out = []
    start, left = 0, buckets
    while start < n:
        if left <= 1:
            end = n
        else:
            end = start + max(1, math.ceil((n - start) / left))
            end = min(end, n)
            end = int(np.searchsorted(v, v[end - 1], side="right"))
        out.append((int(v[end - 1]), end - start))
        start = end
        left -= 1
    return tuple(out)


def column_stats(values: np.ndarray, buckets: int = DEFAULT_BUCKETS) -> ColumnStats:
    values = np.asarray(values, dtype=np.int64)
    if buckets < 1:
        raise ConfigError("histogram needs at least one bucket")
    if len(values) == 0:
        return ColumnStats(0, 0, 0, 0, ())
    return ColumnStats(len(values), int(values.min()), int(values.max()), len(np.unique(values)), equi_depth(values, buckets))


def compute_stats(rel: Relation, buckets: int = DEFAULT_BUCKETS) -> dict[str, ColumnStats]:
    return {c.name: column_stats(rel.column(c.name), buckets) for c in rel.table.columns}


@dataclass(frozen=True)
class SchemaStats:
    row_counts: Mapping[str, int]
    columns: Mapping[tuple[str, str], ColumnStats]
    fanouts: Mapping[ForeignKey, float]

    def rows(self, table: str) -> int:
        return self.row_counts[table]

    def column(self, table: str, column: str) -> ColumnStats:
        return self.columns[(table, column)]

    def fanout(self, fk: ForeignKey) -> float:
        return self.fanouts[fk]

    def to_dict(self) -> dict:
        return {
            "row_counts": dict(self.row_counts),
            "columns": {f"{t}.{c}": s.to_dict() for (t, c), s in self.columns.items()},
            "fanouts": [{"child": f"{fk.child[0]}.{fk.child[1]}", "parent": f"{fk.parent[0]}.{fk.parent[1]}", "fanout": f} for fk, f in self.fanouts.items()],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> SchemaStats:
        cols = {_split_ref(k): ColumnStats.from_dict(v) for k, v in doc["columns"].items()}
        fans = {ForeignKey(_split_ref(f["child"]), _split_ref(f["parent"])): float(f["fanout"]) for f in doc["fanouts"]}
        return cls(dict(doc["row_counts"]), cols, fans)


def compute_schema_stats(db: Database, buckets: int = DEFAULT_BUCKETS) -> SchemaStats:
    row_counts = {name: len(db[name]) for name in db.schema.table_names}
    columns = {}
    for name in db.schema.table_names:
        for col, st in compute_stats(db[name], buckets).items():
            columns[(name, col)] = st
    fanouts = {}
    for fk in db.schema.fks:
        parent_ndv = columns[fk.parent].ndv
        fanouts[fk] = row_counts[fk.child[0]] / parent_ndv if parent_ndv else 0.0
    return SchemaStats(row_counts, columns, fanouts)


def rename_database(db: Database, table_map: Mapping[str, str], column_map: Mapping[tuple[str, str], str] | None = None) -> Database:
    """Copy of ``db`` with tables (and optionally columns) renamed; data untouched."""
    column_map = column_map or {}

    def col(t, c):
        return column_map.get((t, c), c)

    tables = []
    rels = {}
    for t in db.schema.tables:
        new = TableDef(
            table_map.get(t.name, t.name),
            tuple(ColumnDef(col(t.name, c.name), c.lo, c.hi, c.kind) for c in t.columns),
            col(t.name, t.primary_key),
        )
        tables.append(new)
        rels[new.name] = db[t.name].renamed(new)
    fks = [
        ForeignKey(
            (table_map.get(fk.child[0], fk.child[0]), col(*fk.child)),
            (table_map.get(fk.parent[0], fk.parent[0]), col(*fk.parent)),
        )
        for fk in db.schema.fks
    ]
    return Database(Schema(tuple(tables), tuple(fks)), rels)


def iter_columns(db: Database) -> Iterable[tuple[str, str]]:
    for t in db.schema.tables:
        for c in t.columns:
            yield t.name, c.name

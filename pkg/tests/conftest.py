from __future__ import annotations

import numpy as np
import pytest

from cardmix.querygen import JoinPred, SpjQuery, WorkloadConfig, gen_workload
from cardmix.relstore import (
    ColumnDef,
    ColumnSpec,
    Database,
    ForeignKey,
    GeneratorSpec,
    Relation,
    Schema,
    TableDef,
    compute_schema_stats,
    gen_database,
)

SMALL_COLUMNS = (
    ColumnSpec(dist="uniform", lo=0, hi=30),
    ColumnSpec(dist="zipf", lo=0, hi=20, s=1.2),
    ColumnSpec(dist="correlated", source="a0", noise=0.1, lo=0, hi=30),
)


def small_spec(n_tables: int = 3, rows=(120, 60, 40), topology: str = "chain") -> GeneratorSpec:
    rows = list(rows)[:n_tables] + [30] * max(0, n_tables - len(rows))
    return GeneratorSpec.compact(n_tables, rows, topology, SMALL_COLUMNS, ColumnSpec(dist="zipf", s=1.1))


@pytest.fixture(scope="session")
def ab_schema() -> Schema:
    """Two tables: b.aid references a.id."""
    a = TableDef("a", (ColumnDef("id", 0, 99), ColumnDef("v", 0, 99)), "id")
    b = TableDef("b", (ColumnDef("id", 0, 99), ColumnDef("aid", 0, 99), ColumnDef("x", 0, 9)), "id")
    return Schema((a, b), (ForeignKey(("b", "aid"), ("a", "id")),))


@pytest.fixture(scope="session")
def ab_db(ab_schema) -> Database:
    a_rows = np.array([[i, (7 * i) % 10] for i in range(10)])
    b_rows = np.array([[j, j % 4, j % 3] for j in range(12)])
    return Database(ab_schema, {"a": Relation(ab_schema.table("a"), a_rows), "b": Relation(ab_schema.table("b"), b_rows)})


@pytest.fixture(scope="session")
def ab_join() -> JoinPred:
    return JoinPred(("b", "aid"), ("a", "id"))


@pytest.fixture(scope="session")
def chain_db() -> Database:
    return gen_database(small_spec(4, (150, 80, 50, 30), "chain"), seed=11)


@pytest.fixture(scope="session")
def chain_stats(chain_db):
    return compute_schema_stats(chain_db)


@pytest.fixture(scope="session")
def chain_queries(chain_db, chain_stats) -> list[SpjQuery]:
    cfg = WorkloadConfig(max_tables=4, max_filters=3)
    return gen_workload(chain_db.schema, chain_stats, 120, cfg, seed=5)


@pytest.fixture(scope="session")
def snowflake_db() -> Database:
    return gen_database(small_spec(5, (200, 90, 70, 40, 30), "snowflake"), seed=3)


def _group(name, role, tables, rows, topology, n, max_tables=3, max_filters=2, **extra):
    doc = {
        "name": name,
        "role": role,
        "generator": {
            "tables": tables,
            "rows": rows,
            "topology": topology,
            "columns": [{"dist": "uniform", "lo": 0, "hi": 50}, {"dist": "zipf", "s": 1.2, "lo": 0, "hi": 30}],
            "fk": {"dist": "zipf", "s": 1.1},
        },
        "workload": {"n": n, "max_tables": min(tables, max_tables), "max_filters": max_filters},
    }
    doc.update(extra)
    return doc


def tiny_config_doc() -> dict:
    """A fast end-to-end config: three training groups and one held-out group."""
    return {
        "config_version": 1,
        "seed": 5,
        "budget": 60,
        "buckets": 8,
        "planted": "alpha",
        "groups": [
            _group("alpha", "train", 3, [120, 50, 30], "chain", 60),
            _group("beta", "train", 2, [80, 40], "star", 60),
            _group("gamma", "train", 2, [60, 20], "chain", 60, max_tables=1, max_filters=0, noise_labels={"log_lo": 1.0, "log_hi": 3.0}),
            _group("held", "heldout", 3, [100, 40, 30], "star", 30),
        ],
        "train": {"epochs": 2, "batch_size": 32, "seed": 1},
        "dro": {"steps": 5, "batch_size": 50, "seed": 2, "proxy_train": {"seed": 3}},
    }


@pytest.fixture()
def tiny_config_path(tmp_path):
    import json

    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config_doc()))
    return path

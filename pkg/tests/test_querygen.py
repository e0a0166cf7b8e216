from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardmix.errors import ConnectivityError, GenerationError, ParseError, ResolutionError, UnsupportedJoinError
from cardmix.querygen import (
    FilterPred,
    JoinPred,
    Op,
    SpjQuery,
    WorkloadConfig,
    gen_workload,
    parse_sql,
    read_workload,
    to_sql,
    write_workload,
)
from cardmix.relstore import ColumnDef, Database, ForeignKey, Relation, Schema, TableDef, compute_schema_stats, gen_database

from conftest import small_spec


class TestToSql:
    def test_single_table(self):
        assert to_sql(SpjQuery(frozenset({"t1"}))) == "SELECT COUNT(*) FROM t1"

    def test_canonical_order(self, ab_join):
        q = SpjQuery(frozenset({"b", "a"}), frozenset({ab_join}), (FilterPred(("a", "v"), Op.GE, 5),))
        assert to_sql(q) == "SELECT COUNT(*) FROM a, b WHERE b.aid = a.id AND a.v >= 5"

    def test_filters_keep_declaration_order(self):
        f1 = FilterPred(("a", "v"), Op.LT, 9)
        f2 = FilterPred(("a", "id"), Op.EQ, 2)
        assert to_sql(SpjQuery(frozenset({"a"}), filters=(f1, f2))).endswith("WHERE a.v < 9 AND a.id = 2")


class TestParseSql:
    def test_single_table(self, ab_schema):
        assert parse_sql("SELECT COUNT(*) FROM a", ab_schema) == SpjQuery(frozenset({"a"}))

    def test_orientation_is_normalized(self, ab_schema, ab_join):
        q = parse_sql("select count(*) from a, b where a.id = b.aid and b.x < 3", ab_schema)
        assert q.joins == frozenset({ab_join})
        assert q.filters == (FilterPred(("b", "x"), Op.LT, 3),)

    def test_whitespace_and_case(self, ab_schema):
        q = parse_sql("  SeLeCt\tCOUNT ( * )\nFROM b ,a WHERE b.aid=a.id AND a.v<=-3 ", ab_schema)
        assert q.tables == {"a", "b"}
        assert q.filters == (FilterPred(("a", "v"), Op.LE, -3),)

    def test_unknown_column(self, ab_schema):
        text = "SELECT COUNT(*) FROM a WHERE a.nope = 1"
        with pytest.raises(ResolutionError) as info:
            parse_sql(text, ab_schema)
        assert "nope" in str(info.value)
        assert info.value.position == text.index("nope")

    def test_unknown_table(self, ab_schema):
        with pytest.raises(ResolutionError):
            parse_sql("SELECT COUNT(*) FROM zz", ab_schema)

    def test_table_not_in_from(self, ab_schema):
        with pytest.raises(ResolutionError):
            parse_sql("SELECT COUNT(*) FROM a WHERE b.x = 1", ab_schema)

    def test_non_fk_join(self, ab_schema):
        with pytest.raises(UnsupportedJoinError):
            parse_sql("SELECT COUNT(*) FROM a, b WHERE a.v = b.x", ab_schema)

    def test_disconnected(self, ab_schema):
        with pytest.raises(ConnectivityError):
            parse_sql("SELECT COUNT(*) FROM a, b WHERE a.v = 1", ab_schema)

    @pytest.mark.parametrize(
        "text",
        [
            "SELECT COUNT(*) a",
            "SELECT COUNT(*) FROM a WHERE",
            "SELECT COUNT(*) FROM a WHERE a.v != 3",
            "SELECT COUNT(*) FROM a WHERE a.v = 3 OR a.v = 4",
            "SELECT * FROM a",
            "SELECT COUNT(*) FROM a;",
        ],
    )
    def test_syntax_errors_carry_position(self, ab_schema, text):
        with pytest.raises(ParseError) as info:
            parse_sql(text, ab_schema)
        assert info.value.position is not None

    def test_canonical_idempotence(self, ab_schema):
        text = "select count(*) from b, a where a.id = b.aid and b.x > 1 and a.v = 4"
        once = to_sql(parse_sql(text, ab_schema))
        assert to_sql(parse_sql(once, ab_schema)) == once


class TestGenerator:
    def test_single_table_query(self, chain_db, chain_stats):
        (q,) = gen_workload(chain_db.schema, chain_stats, 1, WorkloadConfig(max_tables=1), seed=0)
        assert len(q.tables) == 1 and not q.joins

    def test_invariants(self, chain_db, chain_stats):
        queries = gen_workload(chain_db.schema, chain_stats, 500, WorkloadConfig(max_tables=4, max_filters=3), seed=1)
        fks = {JoinPred.of(fk) for fk in chain_db.schema.fks}
        for q in queries:
            q.validate(chain_db.schema)
            assert q.is_connected()
            assert q.joins <= fks
            assert len(q.joins) == len(q.tables) - 1
            assert len(q.filters) <= 3
            for f in q.filters:
                s = chain_stats.column(*f.column)
                assert s.min <= f.value <= s.max

    def test_chain_reaches_full_length(self, chain_db, chain_stats):
        queries = gen_workload(chain_db.schema, chain_stats, 500, WorkloadConfig(max_tables=4), seed=1)
        assert any(len(q.joins) == 3 for q in queries)

    def test_deterministic(self, chain_db, chain_stats):
        cfg = WorkloadConfig(max_tables=3)
        assert gen_workload(chain_db.schema, chain_stats, 50, cfg, 9) == gen_workload(chain_db.schema, chain_stats, 50, cfg, 9)

    def test_op_mix_respected(self, chain_db, chain_stats):
        cfg = WorkloadConfig(max_tables=2, max_filters=3, op_mix=(0, 0, 0, 0, 1))
        queries = gen_workload(chain_db.schema, chain_stats, 100, cfg, seed=2)
        assert {f.op for q in queries for f in q.filters} == {Op.GE}

    def test_disconnected_schema(self):
        t = [TableDef(n, (ColumnDef("id", 0, 9), ColumnDef("p", 0, 9)), "id") for n in ("x", "y", "z")]
        schema = Schema(tuple(t), (ForeignKey(("x", "p"), ("y", "id")),))
        rels = {n: Relation(schema.table(n), np.array([[0, 0], [1, 0]])) for n in ("x", "y", "z")}
        stats = compute_schema_stats(Database(schema, rels))
        with pytest.raises(GenerationError):
            gen_workload(schema, stats, 5, WorkloadConfig(max_tables=3), seed=0)
        assert len(gen_workload(schema, stats, 5, WorkloadConfig(max_tables=2), seed=0)) == 5

    def test_too_many_tables(self, chain_db, chain_stats):
        with pytest.raises(GenerationError):
            gen_workload(chain_db.schema, chain_stats, 5, WorkloadConfig(max_tables=5), seed=0)


class TestRoundTrip:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["star", "chain", "snowflake"]))
    def test_parse_inverts_emit(self, seed, topology):
        db = gen_database(small_spec(4, topology=topology), seed=seed % 1000)
        stats = compute_schema_stats(db)
        cfg = WorkloadConfig(max_tables=4, max_filters=4, filter_keys=True)
        for q in gen_workload(db.schema, stats, 20, cfg, seed):
            assert parse_sql(to_sql(q), db.schema) == q

    def test_workload_file(self, tmp_path, chain_db, chain_queries):
        path = tmp_path / "w.jsonl"
        cards = list(range(len(chain_queries)))
        write_workload(path, "g", chain_queries, cards)
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {"group", "sql", "card"}
        rows = read_workload(path, chain_db.schema)
        assert [q for _, q, _ in rows] == chain_queries
        assert [c for _, _, c in rows] == cards

    def test_workload_file_bad_line(self, tmp_path, chain_db):
        path = tmp_path / "w.jsonl"
        path.write_text('{"group": "g", "sql": "SELECT COUNT(*) FROM t0", "card": 1}\nnot json\n')
        with pytest.raises(ParseError) as info:
            read_workload(path, chain_db.schema)
        assert info.value.line == 2

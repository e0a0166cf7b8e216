from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardmix.errors import ConfigError, DataError, IntegrityError, ParseError
from cardmix.relstore import (
    ColumnDef,
    ColumnSpec,
    Database,
    ForeignKey,
    GeneratorSpec,
    Relation,
    Schema,
    SchemaStats,
    TableDef,
    column_stats,
    compute_schema_stats,
    compute_stats,
    dump_csv,
    equi_depth,
    gen_database,
    gen_synthetic,
    load_csv,
    load_database,
    load_schema,
    parse_csv,
    write_database,
)

from conftest import small_spec

ID_V = TableDef("t", (ColumnDef("id", 0, 100), ColumnDef("v", 0, 100)), "id")


class TestCsv:
    def test_three_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("id,v\n1,10\n2,20\n3,30\n")
        rel = load_csv(path, ID_V)
        assert len(rel) == 3
        assert rel.column("v").tolist() == [10, 20, 30]

    def test_header_only(self):
        rel = parse_csv("id,v\n", ID_V)
        assert len(rel) == 0
        assert rel.rows.shape == (0, 2)

    def test_duplicate_primary_key(self):
        with pytest.raises(IntegrityError):
            parse_csv("id,v\n1,10\n1,20\n", ID_V)

    @pytest.mark.parametrize(
        "text, line",
        [("id,v\n1,10\n2\n", 3), ("id,v\n1,10\n2,x\n", 3), ("id,v\n1,1,1\n", 2)],
    )
    def test_malformed_row_reports_line(self, text, line):
        with pytest.raises(ParseError) as info:
            parse_csv(text, ID_V)
        assert info.value.line == line
        assert f"line {line}" in str(info.value)

    def test_header_mismatch(self):
        with pytest.raises(ParseError):
            parse_csv("id,w\n1,2\n", ID_V)

    def test_out_of_domain_value(self):
        with pytest.raises(IntegrityError):
            parse_csv("id,v\n1,101\n", ID_V)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", ID_V)

    def test_database_round_trip(self, tmp_path, chain_db):
        write_database(chain_db, tmp_path)
        back = load_database(tmp_path)
        assert back.schema == chain_db.schema
        for name in chain_db.schema.table_names:
            np.testing.assert_array_equal(back[name].rows, chain_db[name].rows)
        assert dump_csv(back["t0"]) == (tmp_path / "t0.csv").read_text()

    def test_schema_json_layout(self, tmp_path, ab_schema):
        doc = ab_schema.to_dict()
        assert doc["fks"] == [{"child": "b.aid", "parent": "a.id"}]
        assert doc["tables"][0]["pk"] == "id"
        assert set(doc["tables"][0]["columns"][0]) == {"name", "kind", "lo", "hi"}
        (tmp_path / "s.json").write_text(ab_schema.dumps())
        assert load_schema(tmp_path / "s.json") == ab_schema


class TestSchemaInvariants:
    def test_fk_parent_must_be_primary_key(self, ab_schema):
        with pytest.raises(ConfigError):
            Schema(ab_schema.tables, (ForeignKey(("b", "aid"), ("a", "v")),))

    def test_self_loop_rejected(self):
        t = TableDef("t", (ColumnDef("id", 0, 9), ColumnDef("p", 0, 9)), "id")
        with pytest.raises(ConfigError):
            Schema((t,), (ForeignKey(("t", "p"), ("t", "id")),))

    def test_referential_integrity_enforced(self, ab_schema):
        a = Relation(ab_schema.table("a"), np.array([[0, 1]]))
        b = Relation(ab_schema.table("b"), np.array([[0, 5, 1]]))
        with pytest.raises(IntegrityError):
            Database(ab_schema, {"a": a, "b": b})

    def test_relation_is_read_only(self, ab_db):
        with pytest.raises(ValueError):
            ab_db["a"].rows[0, 0] = 5


class TestGenerator:
    def test_two_table_star(self):
        spec = GeneratorSpec.compact(2, 100, "star", [ColumnSpec()])
        schema, rels = gen_synthetic(spec, seed=7)
        assert len(schema.fks) == 1
        parent = {r.name: r for r in rels}
        fk = schema.fks[0]
        assert np.isin(parent[fk.child[0]].column(fk.child[1]), parent[fk.parent[0]].column("id")).all()

    def test_deterministic(self):
        spec = small_spec(3)
        _, first = gen_synthetic(spec, seed=7)
        _, second = gen_synthetic(spec, seed=7)
        for x, y in zip(first, second):
            assert x.rows.tobytes() == y.rows.tobytes()

    def test_seed_changes_data(self):
        spec = small_spec(3)
        _, first = gen_synthetic(spec, seed=7)
        _, second = gen_synthetic(spec, seed=8)
        assert any(x.rows.tobytes() != y.rows.tobytes() for x, y in zip(first, second))

    def test_chain_is_a_path(self):
        schema, _ = gen_synthetic(small_spec(4, topology="chain"), seed=1)
        assert len(schema.fks) == 3
        degrees = {t: len(n) for t, n in schema.neighbors().items()}
        assert sorted(degrees.values()) == [1, 1, 2, 2]
        assert len(schema.components()) == 1

    def test_snowflake_is_a_tree(self):
        schema, _ = gen_synthetic(small_spec(5, topology="snowflake"), seed=1)
        assert len(schema.fks) == 4
        assert len(schema.components()) == 1

    def test_fk_to_missing_table(self):
        spec = GeneratorSpec(small_spec(2).tables, "star", (("t0", "ghost"),))
        with pytest.raises(ConfigError):
            gen_synthetic(spec, seed=0)

    @pytest.mark.parametrize("n_tables, rows", [(1, 100), (9, 100), (2, 5), (2, 100_001)])
    def test_size_limits(self, n_tables, rows):
        with pytest.raises(ConfigError):
            gen_synthetic(GeneratorSpec.compact(n_tables, rows), seed=0)

    def test_correlated_column_tracks_source(self):
        cols = [ColumnSpec(dist="uniform", lo=0, hi=999), ColumnSpec(dist="correlated", source="a0", noise=0.01, lo=0, hi=999)]
        db = gen_database(GeneratorSpec.compact(2, 2000, "star", cols), seed=2)
        rel = db["t1"]
        assert np.corrcoef(rel.column("a0"), rel.column("a1"))[0, 1] > 0.99

    def test_zipf_skews_low(self):
        cols = [ColumnSpec(dist="zipf", lo=0, hi=99, s=1.5)]
        db = gen_database(GeneratorSpec.compact(2, 5000, "star", cols), seed=2)
        values = db["t1"].column("a0")
        assert (values == 0).mean() > (values == 50).mean() * 10


class TestStatistics:
    def test_forced_two_buckets(self):
        s = column_stats(np.array([1, 2, 3, 4]), 2)
        assert s.histogram == ((2, 2), (4, 2))
        assert s.ndv == 4

    def test_all_equal(self):
        s = column_stats(np.array([5, 5, 5, 5]), 2)
        assert s.histogram == ((5, 4),)
        assert s.ndv == 1

    def test_zipf_mass(self):
        rng = np.random.default_rng(0)
        values = rng.zipf(1.1, size=1000) % 500
        s = column_stats(values, 16)
        assert sum(c for _, c in s.histogram) == 1000

    def test_empty_relation(self):
        rel = parse_csv("id,v\n", ID_V)
        stats = compute_stats(rel, 4)
        assert stats["v"].row_count == 0
        assert stats["v"].histogram == ()

    def test_zero_buckets(self):
        with pytest.raises(ConfigError):
            equi_depth(np.array([1, 2]), 0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=300), st.integers(1, 20))
    def test_histogram_properties(self, values, H):
        v = np.array(values)
        s = column_stats(v, H)
        bounds = [ub for ub, _ in s.histogram]
        counts = [c for _, c in s.histogram]
        assert sum(counts) == len(v)
        assert bounds == sorted(bounds) and len(set(bounds)) == len(bounds)
        assert len(s.histogram) <= H
        assert s.ndv == len(np.unique(v))
        assert s.min == v.min() and s.max == v.max() == bounds[-1]
        # no value is split: each bucket holds exactly the values in (prev, ub]
        prev = -np.inf
        for ub, c in s.histogram:
            assert c == int(((v > prev) & (v <= ub)).sum())
            prev = ub
        # size bound: at most ceil(n/H) plus the multiplicity of the boundary value
        n = len(v)
        for ub, c in s.histogram:
            assert c <= -(-n // H) + int((v == ub).sum())

    def test_fraction_le_endpoints(self):
        s = column_stats(np.arange(100), 4)
        assert s.fraction_le(-1) == 0.0
        assert s.fraction_le(99) == 1.0
        assert s.fraction_le(49) == pytest.approx(0.5)

    def test_schema_stats_fanout(self, chain_db):
        stats = compute_schema_stats(chain_db)
        for fk in chain_db.schema.fks:
            expected = len(chain_db[fk.child[0]]) / len(np.unique(chain_db[fk.parent[0]].column(fk.parent[1])))
            assert stats.fanout(fk) == pytest.approx(expected, rel=1e-12)

    def test_schema_stats_round_trip(self, chain_db):
        stats = compute_schema_stats(chain_db)
        back = SchemaStats.from_dict(stats.to_dict())
        assert back.row_counts == stats.row_counts
        assert back.columns == stats.columns
        assert back.fanouts == stats.fanouts

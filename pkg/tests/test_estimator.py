from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardmix import estimator
from cardmix.corpus import DomainWeights, GroupData, MixtureCorpus
from cardmix.errors import CheckpointError, ConfigError
from cardmix.estimator import MlpParams, TrainConfig
from cardmix.featurizer import DIM, encode_many
from cardmix.oracle import label_workload
from cardmix.querygen import LabeledExample, SpjQuery
from cardmix.relstore import compute_schema_stats


def constant_model(c: float) -> MlpParams:
    p = estimator.init(0).zeros_like()
    p.biases[-1][:] = c
    return p


def linear_corpus(n: int, k: int = 1, seed: int = 0) -> MixtureCorpus:
    """Groups whose log labels are an exact linear function of the features."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 1, DIM)
    groups = []
    for g in range(k):
        X = rng.uniform(0, 1, (n, DIM))
        groups.append(GroupData(f"g{g}", X, np.expm1(X @ w / 4 + 1)))
    return MixtureCorpus(tuple(groups))


def fd_max_rel_error(p: MlpParams, X, cards, weights, h: float = 1e-4) -> float:
    _, g = estimator.weighted_grad(p, X, cards, weights)
    worst = 0.0
    for arr, garr in zip(p.arrays(), g.arrays()):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = estimator.weighted_grad(p, X, cards, weights)[0]
            arr[idx] = old - h
            down = estimator.weighted_grad(p, X, cards, weights)[0]
            arr[idx] = old
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(garr[idx]), 1e-6)
            worst = max(worst, abs(numeric - garr[idx]) / denom)
    return worst


class TestInit:
    def test_deterministic(self):
        assert estimator.init(3).identical(estimator.init(3))
        assert not estimator.init(3).identical(estimator.init(4))

    def test_shapes_and_bounds(self):
        p = estimator.init(1)
        assert p.layer_dims == (32, 64, 64, 1)
        assert all(not b.any() for b in p.biases)
        assert np.abs(p.weights[0]).max() <= math.sqrt(6 / 96)


class TestForward:
    def test_zero_network(self):
        p = estimator.init(0).zeros_like()
        assert estimator.forward(p, np.ones(DIM)) == 0.0

    def test_hand_computed_micro_network(self):
        p = MlpParams([np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([[3.0], [-2.0]])], [np.array([0.0, -1.0]), np.array([0.5])])
        # hidden = relu([1 + 4, -1 + 1 - 1]) = [5, 0]; output = 15 + 0.5
        assert estimator.forward(p, np.array([1.0, 2.0])) == 15.5

    def test_finite(self, chain_queries, chain_stats):
        out = estimator.forward_batch(estimator.init(2), encode_many(chain_queries, chain_stats))
        assert np.isfinite(out).all()


class TestLoss:
    @pytest.fixture()
    def stats(self, ab_db):
        return compute_schema_stats(ab_db)

    def example(self, card):
        return LabeledExample(SpjQuery(frozenset({"a"})), card)

    def test_perfect(self, stats):
        assert estimator.example_loss(constant_model(math.log1p(10)), self.example(10), stats) == 0.0

    def test_unit_gap(self, stats):
        assert estimator.example_loss(constant_model(0.0), self.example(math.e - 1), stats) == pytest.approx(1.0, abs=1e-15)

    def test_raw_space(self, stats):
        p = constant_model(math.log1p(7))
        assert estimator.example_loss(p, self.example(10), stats, "raw") == pytest.approx(9.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-5, 20), st.integers(0, 10**8))
    def test_non_negative(self, pred, card):
        assert estimator.losses(np.array([pred]), np.array([card]))[0] >= 0


class TestGrad:
    def test_zero_weights(self, chain_db):
        stats = compute_schema_stats(chain_db)
        ex = LabeledExample(SpjQuery(frozenset({"t0"})), 5)
        g = estimator.grad(estimator.init(0), [(ex, 0.0), (ex, 0.0)], stats)
        assert not g.flat().any()

    def test_linear_in_weights(self):
        rng = np.random.default_rng(0)
        X, cards, w = rng.uniform(0, 1, (10, DIM)), rng.integers(0, 1000, 10), rng.uniform(0, 1, 10)
        p = estimator.init(5)
        _, g1 = estimator.weighted_grad(p, X, cards, w)
        _, g2 = estimator.weighted_grad(p, X, cards, 2 * w)
        np.testing.assert_array_equal(2 * g1.flat(), g2.flat())

    def test_negative_weight_rejected(self, chain_db):
        stats = compute_schema_stats(chain_db)
        ex = LabeledExample(SpjQuery(frozenset({"t0"})), 5)
        with pytest.raises(ConfigError):
            estimator.grad(estimator.init(0), [(ex, -1.0)], stats)

    def test_finite_differences(self):
        rng = np.random.default_rng(1)
        p = estimator.init(7)
        for arr in p.biases:
            arr += rng.normal(0, 0.1, arr.shape)
        X, cards, w = rng.uniform(0, 1, (10, DIM)), rng.integers(0, 10**5, 10), rng.uniform(0, 1, 10)
        assert fd_max_rel_error(p, X, cards, w) <= 1e-4

    def test_grad_of_labeled_batch_matches_arrays(self, chain_db, chain_queries):
        stats = compute_schema_stats(chain_db)
        group = label_workload(chain_db, chain_queries[:10])
        weights = np.linspace(0.1, 1.0, 10)
        g = estimator.grad(estimator.init(1), list(zip(group.examples, weights)), stats)
        _, ref = estimator.weighted_grad(estimator.init(1), encode_many(group.queries, stats), group.cards, weights)
        np.testing.assert_array_equal(g.flat(), ref.flat())


class TestTrain:
    def test_learns_linear_labels(self):
        corpus = linear_corpus(256)
        alpha = DomainWeights.uniform(corpus.names)
        before = estimator.objective(estimator.init(0), corpus, alpha)
        p = estimator.train(corpus, alpha, TrainConfig(epochs=200, batch_size=64, seed=0))
        assert estimator.objective(p, corpus, alpha) * 100 <= before

    def test_deterministic(self):
        corpus = linear_corpus(100, k=2)
        cfg = TrainConfig(epochs=3, batch_size=32, seed=4)
        alpha = DomainWeights.uniform(corpus.names)
        assert estimator.train(corpus, alpha, cfg).identical(estimator.train(corpus, alpha, cfg))

    def test_uniform_groups_equal_flat_training(self):
        corpus = linear_corpus(64, k=2)
        flat = MixtureCorpus((GroupData("all", *corpus.pooled()[:2]),))
        cfg = TrainConfig(epochs=3, batch_size=16, seed=2)
        grouped = estimator.train(corpus, DomainWeights.uniform(corpus.names), cfg)
        pooled = estimator.train(flat, DomainWeights.uniform(["all"]), cfg)
        assert grouped.identical(pooled)

    def test_objective_equivalence(self):
        corpus = linear_corpus(40, k=3)
        p = estimator.init(3)
        X, cards, _ = corpus.pooled()
        flat = float(np.mean(estimator.example_losses(p, X, cards)))
        assert estimator.objective(p, corpus, DomainWeights.uniform(corpus.names)) == pytest.approx(flat, abs=1e-12)

    def test_empty_group_with_weight(self):
        corpus = MixtureCorpus((GroupData("a", np.zeros((3, DIM)), [1, 2, 3]), GroupData("b", np.zeros((0, DIM)), [])))
        with pytest.raises(ConfigError):
            estimator.train(corpus, DomainWeights.uniform(["a", "b"]), TrainConfig(epochs=1))

    def test_zero_weight_empty_group_allowed(self):
        corpus = MixtureCorpus((GroupData("a", np.zeros((3, DIM)), [1, 2, 3]), GroupData("b", np.zeros((0, DIM)), [])))
        estimator.train(corpus, DomainWeights(("a", "b"), [1.0, 0.0]), TrainConfig(epochs=1))


class TestPredict:
    def test_clamp(self):
        assert estimator.predict_cards(constant_model(0.0), np.zeros((1, DIM)))[0] == 1.0
        assert estimator.predict_cards(constant_model(-3.0), np.zeros((1, DIM)))[0] == 1.0

    def test_inverse_transform(self):
        assert estimator.predict_cards(constant_model(math.log(101)), np.zeros((1, DIM)))[0] == pytest.approx(100, rel=1e-14)

    def test_random_queries(self, chain_queries, chain_stats):
        values = [estimator.predict_card(estimator.init(9), q, chain_stats) for q in chain_queries[:100]]
        assert all(math.isfinite(v) and v >= 1 for v in values)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = estimator.init(11)
        path = tmp_path / "m.json"
        estimator.save(p, path)
        assert estimator.load(path).identical(p)
        doc = json.loads(path.read_text())
        assert doc["version"] == 1 and doc["layer_dims"] == [32, 64, 64, 1] and doc["loss_space"] == "log"

    def test_truncated(self, tmp_path):
        text = estimator.dumps(estimator.init(1))
        with pytest.raises(CheckpointError):
            estimator.loads(text[: len(text) // 2])

    def test_version_mismatch(self):
        doc = json.loads(estimator.dumps(estimator.init(1)))
        doc["version"] = 2
        with pytest.raises(CheckpointError):
            estimator.loads(json.dumps(doc))

    def test_dimension_mismatch(self):
        doc = json.loads(estimator.dumps(estimator.init(1)))
        doc["layer_dims"] = [32, 64, 63, 1]
        with pytest.raises(CheckpointError):
            estimator.loads(json.dumps(doc))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            estimator.load(tmp_path / "absent.json")

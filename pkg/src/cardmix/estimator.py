"""Small ReLU network regressing log cardinality, trained with Adam.

The network maps a feature vector to ``ln(1 + card)``.  One parameter type
serves as the reference model, the DRO proxy and the final model.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DomainWeights, MixtureCorpus
from .errors import CheckpointError, ConfigError
from .featurizer import encode, encode_many
from .querygen import LabeledExample, SpjQuery
from .relstore import SchemaStats

log = logging.getLogger(__name__)

LAYER_DIMS = (32, 64, 64, 1)
CHECKPOINT_VERSION = 1
LOSS_SPACES = ("log", "raw")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(eq=False)
class MlpParams:
    weights: list[np.ndarray]  # weights[l] has shape (fan_in, fan_out)
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must pair up layer by layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise ConfigError(f"layer {l}: weight {w.shape} does not match bias {b.shape}")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise ConfigError(f"layer {l}: input width {w.shape[0]} != previous output {self.weights[l - 1].shape[1]}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> MlpParams:
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def identical(self, other: MlpParams) -> bool:
        """Bit-for-bit equality of every array."""
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and x.tobytes() == y.tobytes() for x, y in zip(a, b))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    loss_space: str = "log"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.loss_space not in LOSS_SPACES:
            raise ConfigError(f"loss_space must be one of {LOSS_SPACES}")

    @classmethod
    def from_dict(cls, doc) -> TrainConfig:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**doc)


def init(seed: int, layer_dims: Sequence[int] = LAYER_DIMS) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _forward(p: MlpParams, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    acts = [X]
    h = X
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w + b
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return h[:, 0], acts


def forward_batch(p: MlpParams, X: np.ndarray) -> np.ndarray:
    """Predicted ``ln(1 + card)`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _forward(p, X)[0]


def forward(p: MlpParams, v: np.ndarray) -> float:
    return float(forward_batch(p, np.asarray(v)[None, :])[0])


def losses(pred: np.ndarray, cards: np.ndarray, loss_space: str = "log") -> np.ndarray:
    """Per-example squared error of predictions against true cardinalities."""
    cards = np.asarray(cards, dtype=np.float64)
    if loss_space == "log":
        return (pred - np.log1p(cards)) ** 2
    return (np.expm1(pred) - cards) ** 2


def _dloss(pred: np.ndarray, cards: np.ndarray, loss_space: str) -> np.ndarray:
    if loss_space == "log":
        return 2.0 * (pred - np.log1p(cards))
    return 2.0 * (np.expm1(pred) - cards) * np.exp(pred)


def example_losses(p: MlpParams, X: np.ndarray, cards: np.ndarray, loss_space: str = "log") -> np.ndarray:
    return losses(forward_batch(p, X), cards, loss_space)


def example_loss(p: MlpParams, ex: LabeledExample, stats: SchemaStats, loss_space: str = "log") -> float:
    return float(losses(np.array([forward(p, encode(ex.query, stats))]), np.array([ex.cardinality]), loss_space)[0])


def weighted_grad(p: MlpParams, X: np.ndarray, cards: np.ndarray, weights: np.ndarray, loss_space: str = "log") -> tuple[float, MlpParams]:
    """Value and exact gradient of ``sum_i weights[i] * loss_i``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    pred, acts = _forward(p, X)
    value = float(weights @ losses(pred, cards, loss_space))
    delta = (weights * _dloss(pred, cards, loss_space))[:, None]
    gw, gb = [None] * len(p.weights), [None] * len(p.weights)
    for l in range(len(p.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ p.weights[l].T) * (acts[l] > 0)
    return value, MlpParams(gw, gb)


def grad(p: MlpParams, batch: Sequence[tuple[LabeledExample, float]], stats: SchemaStats, loss_space: str = "log") -> MlpParams:
    """Gradient of the weighted loss over ``(example, weight)`` pairs."""
    if not batch:
        return p.zeros_like()
    X = encode_many([ex.query for ex, _ in batch], stats)
    cards = np.array([ex.cardinality for ex, _ in batch], dtype=np.float64)
    w = np.array([wt for _, wt in batch], dtype=np.float64)
    if (w < 0).any():
        raise ConfigError("example weights must be non-negative")
    return weighted_grad(p, X, cards, w, loss_space)[1]


class Adam:
    def __init__(self, params: MlpParams, learning_rate: float):
        self.lr = learning_rate
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: MlpParams, g: MlpParams) -> None:
        """In-place update of ``params`` along ``-g``."""
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for p, m, v, gr in zip(params.arrays(), self.m.arrays(), self.v.arrays(), g.arrays()):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * gr
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * gr * gr
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def example_weights(corpus: MixtureCorpus, alpha: DomainWeights) -> np.ndarray:
    """Per-example weight ``alpha_g / |group g|`` over the pooled corpus."""
    if list(alpha.names) != corpus.names:
        raise ConfigError(f"weights {list(alpha.names)} do not match corpus groups {corpus.names}")
    sizes = corpus.sizes
    for name, a, n in zip(corpus.names, alpha.alpha, sizes):
        if a > 0 and n == 0:
            raise ConfigError(f"group {name} is empty but has weight {a}")
    per_group = np.divide(alpha.alpha, sizes, out=np.zeros(corpus.k), where=sizes > 0)
    return np.repeat(per_group, sizes)


def train(corpus: MixtureCorpus, alpha: DomainWeights, cfg: TrainConfig, init_params: MlpParams | None = None) -> MlpParams:
    """Minimise ``sum_g alpha_g * mean loss of group g`` with minibatch Adam.

    Each minibatch is an unbiased estimate of the full objective: a batch of
    ``b`` examples drawn from ``N`` pooled ones contributes
    ``(N / b) * sum(weight_i * loss_i)``.
    """
    w_all = example_weights(corpus, alpha)
    X, cards, _ = corpus.pooled()
    n = len(cards)
    if n == 0:
        raise ConfigError("cannot train on an empty corpus")
    rng = np.random.default_rng(cfg.seed)
    params = init_params.copy() if init_params is not None else init(cfg.seed)
    opt = Adam(params, cfg.learning_rate)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            _, g = weighted_grad(params, X[idx], cards[idx], w_all[idx] * (n / len(idx)), cfg.loss_space)
            opt.step(params, g)
        if log.isEnabledFor(logging.DEBUG):
            full = float(w_all @ example_losses(params, X, cards, cfg.loss_space))
            log.debug("epoch %d objective %.6f", epoch + 1, full)
    return params


def objective(params: MlpParams, corpus: MixtureCorpus, alpha: DomainWeights, loss_space: str = "log") -> float:
    X, cards, _ = corpus.pooled()
    return float(example_weights(corpus, alpha) @ example_losses(params, X, cards, loss_space))


def predict_cards(p: MlpParams, X: np.ndarray) -> np.ndarray:
    return np.maximum(np.expm1(forward_batch(p, X)), 1.0)


def predict_card(p: MlpParams, q: SpjQuery, stats: SchemaStats) -> float:
    """Estimated cardinality, never below 1."""
    return float(predict_cards(p, encode(q, stats)[None, :])[0])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _hex(a: np.ndarray):
    if a.ndim == 1:
        return [float(x).hex() for x in a]
    return [_hex(row) for row in a]


def dumps(p: MlpParams, loss_space: str = "log") -> str:
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(p.layer_dims),
        "weights": [_hex(w) for w in p.weights],
        "biases": [_hex(b) for b in p.biases],
        "loss_space": loss_space,
    }
    return json.dumps(doc) + "\n"


def loads(text: str) -> MlpParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version') if isinstance(doc, dict) else None!r}")
    try:
        dims = [int(d) for d in doc["layer_dims"]]
        weights = [np.array([[float.fromhex(x) for x in row] for row in w], dtype=np.float64) for w in doc["weights"]]
        biases = [np.array([float.fromhex(x) for x in b], dtype=np.float64) for b in doc["biases"]]
        if doc.get("loss_space", "log") not in LOSS_SPACES:
            raise CheckpointError(f"unknown loss space {doc['loss_space']!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise CheckpointError(f"checkpoint has {len(weights)} layers but declares dims {dims}")
    for l, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
            raise CheckpointError(f"layer {l}: shapes {w.shape}/{b.shape} do not match declared dims {dims}")
    return MlpParams(weights, biases)


def save(p: MlpParams, path: str | Path, loss_space: str = "log") -> None:
    Path(path).write_text(dumps(p, loss_space), encoding="utf-8")


def load(path: str | Path) -> MlpParams:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(text)

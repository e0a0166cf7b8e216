"""Group DRO domain reweighting and simplified training-set sampling.

A proxy model is trained against a fixed reference model.  At every step the
per-group mean of clipped excess loss ``max(loss_proxy - loss_ref, 0)`` drives
an exponentiated-gradient ascent step on the group weights, and the proxy then
takes one Adam step on the reweighted loss.  The time-averaged weights rank
how much each group still has to teach.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import estimator
from .corpus import DomainWeights, GroupData, MixtureCorpus
from .errors import ConfigError, ContractViolation
from .estimator import MlpParams, TrainConfig

log = logging.getLogger(__name__)

__all__ = [
    "DomainWeights",
    "MixtureCorpus",
    "DroConfig",
    "ExcessLossReport",
    "DroResult",
    "uniform_weights",
    "excess_losses",
    "update_weights",
    "run_dro",
    "sample_counts",
    "sample_simplified",
]


@dataclass(frozen=True)
class DroConfig:
    steps: int = 1000
    batch_size: int = 2000
    eta_alpha: float = 0.1
    smoothing: float = 1e-3
    proxy_train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    # "reference" starts the proxy from the reference model, "scratch" from a fresh init
    proxy_init: str = "scratch"

    def __post_init__(self):
        if not self.eta_alpha > 0:
            raise ConfigError("eta_alpha must be positive")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("smoothing must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.proxy_init not in ("reference", "scratch"):
            raise ConfigError(f"proxy_init must be 'reference' or 'scratch', got {self.proxy_init!r}")

    @classmethod
    def from_dict(cls, doc) -> DroConfig:
        doc = dict(doc)
        if "proxy_train" in doc:
            doc["proxy_train"] = TrainConfig.from_dict(doc["proxy_train"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown DRO config keys {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class ExcessLossReport:
    excess: np.ndarray  # per-group mean clipped excess, 0 for absent groups
    counts: np.ndarray  # per-group batch membership


def uniform_weights(corpus: MixtureCorpus | Sequence[str]) -> DomainWeights:
    names = corpus.names if isinstance(corpus, MixtureCorpus) else list(corpus)
    return DomainWeights.uniform(names)


def group_excess(proxy_losses: np.ndarray, ref_losses: np.ndarray, group_idx: np.ndarray, k: int) -> ExcessLossReport:
    """Per-group mean of per-example clipped excess loss."""
    clipped = np.maximum(np.asarray(proxy_losses) - np.asarray(ref_losses), 0.0)
    counts = np.bincount(group_idx, minlength=k)
    sums = np.bincount(group_idx, weights=clipped, minlength=k)
    excess = np.divide(sums, counts, out=np.zeros(k), where=counts > 0)
    return ExcessLossReport(excess, counts)


def excess_losses(
    proxy: MlpParams,
    reference: MlpParams,
    batch: Sequence[tuple[int, np.ndarray, float]],
    k: int,
    loss_space: str = "log",
) -> ExcessLossReport:
    """Excess-loss report for a batch of ``(group_index, features, card)``."""
    if not batch:
        return ExcessLossReport(np.zeros(k), np.zeros(k, dtype=np.int64))
    gidx = np.array([g for g, _, _ in batch], dtype=np.int64)
    X = np.stack([np.asarray(x, dtype=np.float64) for _, x, _ in batch])
    cards = np.array([c for _, _, c in batch], dtype=np.float64)
    lp = estimator.example_losses(proxy, X, cards, loss_space)
    lr = estimator.example_losses(reference, X, cards, loss_space)
    return group_excess(lp, lr, gidx, k)


def update_weights(alpha: DomainWeights, report: ExcessLossReport | np.ndarray, eta: float, c: float) -> DomainWeights:
    """Exponentiated-gradient ascent step followed by mixing with uniform."""
    excess = report.excess if isinstance(report, ExcessLossReport) else np.asarray(report, dtype=np.float64)
    a = alpha.alpha
    k = len(a)
    # work in log space so large excesses cannot overflow
    with np.errstate(divide="ignore"):
        logits = np.log(a) + eta * excess
    finite = np.isfinite(logits)
    if not finite.any():
        raise ContractViolation("all domain weights vanished")
    shifted = np.where(finite, np.exp(logits - logits[finite].max()), 0.0)
    raw = shifted / shifted.sum()
    out = (1.0 - c) * raw + c / k
    out = out / math.fsum(out)
    return DomainWeights(alpha.names, out)


@dataclass
class DroResult:
    weights: DomainWeights
    proxy: MlpParams
    trace: list[tuple[np.ndarray, np.ndarray]]  # (alpha_t, excess_t) per step

    def trace_lines(self) -> str:
        return "".join(
            json.dumps({"step": t + 1, "alpha": a.tolist(), "excess": e.tolist()}) + "\n"
            for t, (a, e) in enumerate(self.trace)
        )


def run_dro(corpus: MixtureCorpus, reference: MlpParams, cfg: DroConfig, init_params: MlpParams | None = None) -> DroResult:
    """Optimise domain weights against ``reference``; returns time-averaged weights."""
    if cfg.steps < 1:
        raise ConfigError("DRO needs at least one step")
    if len(corpus) == 0:
        raise ConfigError("corpus is empty")
    if (corpus.sizes == 0).any():
        raise ConfigError("every corpus group must be non-empty")
    k = corpus.k
    if cfg.batch_size < k:
        log.warning("DRO batch size %d is below the group count %d", cfg.batch_size, k)
    X, cards, gidx = corpus.pooled()
    n = len(cards)
    space = cfg.proxy_train.loss_space
    ref_losses = estimator.example_losses(reference, X, cards, space)

    rng = np.random.default_rng(cfg.seed)
    if init_params is not None:
        proxy = init_params.copy()
    elif cfg.proxy_init == "reference":
        proxy = reference.copy()
    else:
        proxy = estimator.init(cfg.proxy_train.seed)
    opt = estimator.Adam(proxy, cfg.proxy_train.learning_rate)
    alpha = uniform_weights(corpus)
    total = np.zeros(k)
    trace = []
    b = min(cfg.batch_size, n)
    for step in range(cfg.steps):
        idx = rng.choice(n, size=b, replace=False)
        g = gidx[idx]
        proxy_losses = estimator.example_losses(proxy, X[idx], cards[idx], space)
        report = group_excess(proxy_losses, ref_losses[idx], g, k)
        alpha = update_weights(alpha, report, cfg.eta_alpha, cfg.smoothing)
        total += alpha.alpha
        trace.append((alpha.alpha.copy(), report.excess.copy()))

        # weight per example = alpha_g / (members of g in this batch)
        per_group = np.divide(alpha.alpha, report.counts, out=np.zeros(k), where=report.counts > 0)
        _, grad = estimator.weighted_grad(proxy, X[idx], cards[idx], per_group[g], space)
        opt.step(proxy, grad)
        if log.isEnabledFor(logging.DEBUG) and (step + 1) % 100 == 0:
            log.debug("dro step %d alpha %s", step + 1, np.round(alpha.alpha, 4).tolist())
    return DroResult(DomainWeights.normalized(corpus.names, total / cfg.steps), proxy, trace)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def sample_counts(alpha: DomainWeights | Sequence[float], budget: int) -> list[int]:
    """Examples to draw per group: rounded share of the budget, at least one
    for every group with positive weight."""
    a = alpha.alpha if isinstance(alpha, DomainWeights) else np.asarray(alpha, dtype=np.float64)
    positive = int((a > 0).sum())
    if budget < positive:
        raise ConfigError(f"budget {budget} is smaller than the {positive} groups with positive weight")
    counts = []
    for w in a:
        n_i = round_half_up(float(w) * budget)
        if w > 0 and n_i == 0:
            n_i = 1
        counts.append(n_i)
    return counts


def sample_simplified(corpus: MixtureCorpus, alpha: DomainWeights, budget: int, seed: int) -> MixtureCorpus:
    """Resample each group without replacement in proportion to ``alpha``."""
    if list(alpha.names) != corpus.names:
        raise ConfigError(f"weights {list(alpha.names)} do not match corpus groups {corpus.names}")
    counts = sample_counts(alpha, budget)
    rng = np.random.default_rng(seed)
    groups: list[GroupData] = []
    for group, n_i in zip(corpus.groups, counts):
        if n_i > len(group):
            log.warning("group %s has %d examples; %d requested, taking all", group.name, len(group), n_i)
            n_i = len(group)
        idx = np.sort(rng.choice(len(group), size=n_i, replace=False))
        groups.append(group.take(idx))
    return MixtureCorpus(tuple(groups))

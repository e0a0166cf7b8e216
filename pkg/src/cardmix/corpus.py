"""Grouped training data and simplex weights over the groups."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation
from .featurizer import DIM, encode_many
from .querygen import SpjQuery, WorkloadGroup
from .relstore import SchemaStats

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GroupData:
    """One workload group with its encoded features and labels."""

    name: str
    features: np.ndarray
    cards: np.ndarray
    queries: tuple[SpjQuery, ...] = ()
    schema_ref: str = ""

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.size == 0:
            features = features.reshape(0, DIM)
        cards = np.asarray(self.cards, dtype=np.float64).reshape(-1)
        if len(features) != len(cards):
            raise ConfigError(f"group {self.name}: {len(features)} feature rows for {len(cards)} labels")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "queries", tuple(self.queries))

    def __len__(self):
        return len(self.cards)

    def take(self, idx: np.ndarray) -> GroupData:
        idx = np.asarray(idx, dtype=np.int64)
        queries = tuple(self.queries[i] for i in idx) if self.queries else ()
        return GroupData(self.name, self.features[idx], self.cards[idx], queries, self.schema_ref)

    @classmethod
    def from_workload(cls, group: WorkloadGroup, stats: SchemaStats) -> GroupData:
        queries = group.queries
        return cls(group.group_name, encode_many(queries, stats), group.cards, tuple(queries), group.schema_ref)


@dataclass(frozen=True, eq=False)
class MixtureCorpus:
    groups: tuple[GroupData, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ConfigError("corpus has no groups")
        if len({g.name for g in self.groups}) != len(self.groups):
            raise ConfigError("duplicate group names in corpus")

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=np.int64)

    def __len__(self):
        return int(self.sizes.sum())

    def group(self, name: str) -> GroupData:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def pooled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Features, cards and group index of every example, groups in order."""
        X = np.concatenate([g.features for g in self.groups])
        cards = np.concatenate([g.cards for g in self.groups])
        gidx = np.repeat(np.arange(self.k), self.sizes)
        return X, cards, gidx

    def select(self, names: Iterable[str]) -> MixtureCorpus:
        names = list(names)
        return MixtureCorpus(tuple(self.group(n) for n in names))


@dataclass(frozen=True)
class DomainWeights:
    names: tuple[str, ...]
    alpha: np.ndarray = field(compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1).copy()
        if len(names) != len(alpha):
            raise ConfigError(f"{len(names)} names for {len(alpha)} weights")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate group names in domain weights")
        if not np.isfinite(alpha).all() or (alpha < 0).any():
            raise ContractViolation(f"domain weights must be finite and non-negative: {alpha}")
        if abs(math.fsum(alpha) - 1.0) > SIMPLEX_TOL:
            raise ContractViolation(f"domain weights sum to {math.fsum(alpha)!r}, not 1")
        alpha.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.alpha[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.alpha.tolist()))

    @classmethod
    def uniform(cls, names: Sequence[str]) -> DomainWeights:
        k = len(names)
        if k < 1:
            raise ConfigError("need at least one group")
        return cls(tuple(names), np.full(k, 1.0 / k))

    @classmethod
    def normalized(cls, names: Sequence[str], raw: Sequence[float]) -> DomainWeights:
        raw = np.asarray(raw, dtype=np.float64)
        total = raw.sum()
        if not np.isfinite(total) or total <= 0:
            raise ContractViolation(f"cannot normalise weights {raw}")
        return cls(tuple(names), raw / total)

    def to_json(self, **extra) -> str:
        doc = {"names": list(self.names), "alpha": self.alpha.tolist(), **extra}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> DomainWeights:
        try:
            return cls(tuple(doc["names"]), np.asarray(doc["alpha"], dtype=np.float64))
        except KeyError as exc:
            raise ConfigError(f"weights document lacks {exc}") from exc

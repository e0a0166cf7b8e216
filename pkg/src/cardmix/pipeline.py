"""End-to-end experiment: generate, label, train, reweight, resample, evaluate.

Every stage reads its inputs from and writes its outputs to an output
directory, so stages can be re-run individually::

    out/
      data/<group>/schema.json, <table>.csv, workload.jsonl, stats.json
      models/reference.json, proxy.json, simplified.json, ablate_<mode>_<group>.json
      dro/weights.json, dro/trace.jsonl
      simplified/workload.jsonl
      reports/comparison.csv, ablate_<mode>_<group>.csv (+ .json metadata)
      timings.json
"""

from __future__ import annotations

import json
import logging
import math
import time
import zlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import estimator
from .corpus import DomainWeights, GroupData, MixtureCorpus
from .dromixer import DroConfig, run_dro, sample_simplified
from .errors import CardmixError, ConfigError, DataError
from .estimator import MlpParams, TrainConfig
from .metrics import EvalReport, eval_workload
from .oracle import label_workload
from .plancost import CostParams
from .querygen import (
    LabeledExample,
    WorkloadConfig,
    WorkloadGroup,
    gen_workload,
    parse_sql,
    read_workload,
    workload_lines,
)
from .relstore import (
    Database,
    GeneratorSpec,
    SchemaStats,
    compute_schema_stats,
    gen_database,
    load_database,
    write_database,
)

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
ROLES = ("train", "heldout")


def derive_seed(seed: int, *parts: str) -> int:
    """Stable 63-bit seed for a named sub-stream of the global seed."""
    key = [int(seed) & 0xFFFFFFFF, int(seed) >> 32 & 0xFFFFFFFF] + [zlib.crc32(p.encode()) for p in parts]
    return int(np.random.SeedSequence(key).generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class NoiseLabels:
    """Replace true cardinalities with ``round(expm1(U(log_lo, log_hi)))``."""

    log_lo: float = 0.0
    log_hi: float = 6.0


@dataclass(frozen=True)
class GroupConfig:
    name: str
    role: str
    generator: GeneratorSpec
    workload_size: int
    workload: WorkloadConfig
    noise: NoiseLabels | None = None

    @classmethod
    def from_dict(cls, doc: Mapping) -> GroupConfig:
        try:
            wl = dict(doc.get("workload", {}))
            n = int(wl.pop("n", 1000))
            noise = doc.get("noise_labels")
            role = doc.get("role", "train")
            if role not in ROLES:
                raise ConfigError(f"group {doc['name']}: role must be one of {ROLES}")
            return cls(
                doc["name"],
                role,
                GeneratorSpec.from_dict(doc["generator"]),
                n,
                WorkloadConfig.from_dict(wl),
                NoiseLabels(**noise) if noise else None,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed group config: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    groups: tuple[GroupConfig, ...]
    train: TrainConfig = field(default_factory=TrainConfig)
    dro: DroConfig = field(default_factory=DroConfig)
    budget: int = 5000
    seed: int = 0
    buckets: int = 16
    cost: CostParams = field(default_factory=CostParams)
    planted: str | None = None

    def __post_init__(self):
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate group names")
        if not self.train_groups:
            raise ConfigError("no training groups")
        if not self.heldout_groups:
            raise ConfigError("no held-out groups")
        if self.planted is not None and self.planted not in self.train_groups:
            raise ConfigError(f"planted group {self.planted!r} is not a training group")

    @property
    def train_groups(self) -> list[str]:
        return [g.name for g in self.groups if g.role == "train"]

    @property
    def heldout_groups(self) -> list[str]:
        return [g.name for g in self.groups if g.role == "heldout"]

    def group(self, name: str) -> GroupConfig:
        for g in self.groups:
            if g.name == name:
                return g
        raise ConfigError(f"unknown group {name!r}")

    def with_seed(self, seed: int) -> ExperimentConfig:
        return ExperimentConfig(self.groups, self.train, self.dro, self.budget, seed, self.buckets, self.cost, self.planted)

    @classmethod
    def from_dict(cls, doc: Mapping) -> ExperimentConfig:
        if doc.get("config_version") != CONFIG_VERSION:
            raise ConfigError(f"config_version must be {CONFIG_VERSION}, found {doc.get('config_version')!r}")
        try:
            return cls(
                tuple(GroupConfig.from_dict(g) for g in doc["groups"]),
                TrainConfig.from_dict(doc.get("train", {})),
                DroConfig.from_dict(doc.get("dro", {})),
                int(doc.get("budget", 5000)),
                int(doc.get("seed", 0)),
                int(doc.get("buckets", 16)),
                CostParams(**doc.get("cost", {})),
                doc.get("planted"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def desk_config_path() -> Path:
    return Path(str(resources.files("cardmix") / "configs" / "desk.json"))


def desk_config() -> ExperimentConfig:
    return ExperimentConfig.load(desk_config_path())


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    tmp.replace(path)


class Workbench:
    """Runs pipeline stages for one config against one output directory."""

    def __init__(self, config: ExperimentConfig, out: str | Path):
        self.config = config
        self.out = Path(out)
        self._dbs: dict[str, Database] = {}
        self._stats: dict[str, SchemaStats] = {}
        self._workloads: dict[str, WorkloadGroup] = {}
        self._groups: dict[str, GroupData] = {}

    # -- paths --------------------------------------------------------------

    def data_dir(self, group: str) -> Path:
        return self.out / "data" / group

    def model_path(self, name: str) -> Path:
        return self.out / "models" / f"{name}.json"

    @property
    def weights_path(self) -> Path:
        return self.out / "dro" / "weights.json"

    @property
    def trace_path(self) -> Path:
        return self.out / "dro" / "trace.jsonl"

    @property
    def simplified_path(self) -> Path:
        return self.out / "simplified" / "workload.jsonl"

    def report_path(self, name: str) -> Path:
        return self.out / "reports" / f"{name}.csv"

    # -- loaders --------------------------------------------------------------

    def database(self, group: str) -> Database:
        if group not in self._dbs:
            d = self.data_dir(group)
            if not (d / "schema.json").exists():
                raise DataError(f"no generated data for group {group} under {d}; run 'gen' first")
            self._dbs[group] = load_database(d)
        return self._dbs[group]

    def stats(self, group: str) -> SchemaStats:
        if group not in self._stats:
            path = self.data_dir(group) / "stats.json"
            if path.exists():
                self._stats[group] = SchemaStats.from_dict(json.loads(path.read_text(encoding="utf-8")))
            else:
                self._stats[group] = compute_schema_stats(self.database(group), self.config.buckets)
        return self._stats[group]

    def workload(self, group: str) -> WorkloadGroup:
        if group not in self._workloads:
            rows = read_workload(self.data_dir(group) / "workload.jsonl", self.database(group).schema)
            if any(card is None for _, _, card in rows):
                raise DataError(f"workload of group {group} is not labeled; run 'label' first")
            examples = [LabeledExample(q, card) for _, q, card in rows]
            self._workloads[group] = WorkloadGroup(group, group, examples)
        return self._workloads[group]

    def group_data(self, group: str) -> GroupData:
        if group not in self._groups:
            self._groups[group] = GroupData.from_workload(self.workload(group), self.stats(group))
        return self._groups[group]

    def corpus(self, names: Sequence[str] | None = None) -> MixtureCorpus:
        names = self.config.train_groups if names is None else list(names)
        return MixtureCorpus(tuple(self.group_data(n) for n in names))

    def simplified_corpus(self) -> MixtureCorpus:
        if not self.simplified_path.exists():
            raise DataError("no simplified workload; run 'sample' first")
        by_group: dict[str, list[LabeledExample]] = {n: [] for n in self.config.train_groups}
        for line in self.simplified_path.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            q = parse_sql(rec["sql"], self.database(rec["group"]).schema)
            by_group[rec["group"]].append(LabeledExample(q, int(rec["card"])))
        groups = []
        for name, examples in by_group.items():
            wg = WorkloadGroup(name, name, examples)
            groups.append(GroupData.from_workload(wg, self.stats(name)))
        return MixtureCorpus(tuple(groups))

    # -- timings --------------------------------------------------------------

    def _record_time(self, key: str, seconds: float) -> None:
        path = self.out / "timings.json"
        doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
        doc[key] = seconds
        _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def train_seconds(self, key: str) -> float:
        path = self.out / "timings.json"
        if not path.exists():
            return math.nan
        return float(json.loads(path.read_text(encoding="utf-8")).get(key, math.nan))

    # -- stages --------------------------------------------------------------

    def gen(self) -> None:
        for g in self.config.groups:
            db = gen_database(g.generator, derive_seed(self.config.seed, "data", g.name))
            write_database(db, self.data_dir(g.name))
            stats = compute_schema_stats(db, self.config.buckets)
            queries = gen_workload(db.schema, stats, g.workload_size, g.workload, derive_seed(self.config.seed, "workload", g.name))
            _atomic_write(self.data_dir(g.name) / "workload.jsonl", workload_lines(g.name, queries))
            self._dbs[g.name] = db
            self._stats[g.name] = stats
            self._workloads.pop(g.name, None)
            self._groups.pop(g.name, None)
            log.info("generated group %s: %d rows, %d queries", g.name, db.total_rows, len(queries))

    def label(self) -> None:
        for g in self.config.groups:
            db = self.database(g.name)
            rows = read_workload(self.data_dir(g.name) / "workload.jsonl", db.schema)
            queries = [q for _, q, _ in rows]
            cards = label_workload(db, queries, g.name).cards.tolist()
            if g.noise is not None:
                rng = np.random.default_rng(derive_seed(self.config.seed, "noise", g.name))
                cards = np.rint(np.expm1(rng.uniform(g.noise.log_lo, g.noise.log_hi, size=len(cards)))).astype(np.int64).tolist()
            _atomic_write(self.data_dir(g.name) / "workload.jsonl", workload_lines(g.name, queries, cards))
            self._workloads.pop(g.name, None)
            self._groups.pop(g.name, None)
            log.info("labeled group %s: %d queries", g.name, len(queries))

    def compute_stats(self) -> None:
        for g in self.config.groups:
            stats = compute_schema_stats(self.database(g.name), self.config.buckets)
            _atomic_write(self.data_dir(g.name) / "stats.json", json.dumps(stats.to_dict(), indent=1) + "\n")
            self._stats[g.name] = stats

    def _train(self, name: str, corpus: MixtureCorpus, alpha: DomainWeights, cfg: TrainConfig | None = None) -> MlpParams:
        t0 = time.perf_counter()
        params = estimator.train(corpus, alpha, cfg or self.config.train)
        self._record_time(name, time.perf_counter() - t0)
        _atomic_write(self.model_path(name), estimator.dumps(params, self.config.train.loss_space))
        log.info("trained %s on %d examples", name, len(corpus))
        return params

    def train_reference(self) -> MlpParams:
        corpus = self.corpus()
        return self._train("reference", corpus, DomainWeights.uniform(corpus.names))

    def dro(self) -> DomainWeights:
        corpus = self.corpus()
        reference = estimator.load(self.model_path("reference"))
        result = run_dro(corpus, reference, self.config.dro)
        cfg = self.config.dro
        _atomic_write(
            self.weights_path,
            result.weights.to_json(steps=cfg.steps, eta=cfg.eta_alpha, smoothing=cfg.smoothing, seed=cfg.seed),
        )
        _atomic_write(self.trace_path, result.trace_lines())
        _atomic_write(self.model_path("proxy"), estimator.dumps(result.proxy, cfg.proxy_train.loss_space))
        log.info("DRO weights %s", {k: round(v, 5) for k, v in result.weights.as_dict().items()})
        return result.weights

    def load_weights(self) -> DomainWeights:
        if not self.weights_path.exists():
            raise DataError("no DRO weights; run 'dro' first")
        return DomainWeights.from_dict(json.loads(self.weights_path.read_text(encoding="utf-8")))

    def sample(self) -> MixtureCorpus:
        corpus = self.corpus()
        weights = self.load_weights()
        simplified = sample_simplified(corpus, weights, self.config.budget, derive_seed(self.config.seed, "sample"))
        lines = "".join(
            workload_lines(g.name, g.queries, g.cards.astype(np.int64).tolist()) for g in simplified.groups
        )
        _atomic_write(self.simplified_path, lines)
        log.info("simplified corpus: %d examples", len(simplified))
        return simplified

    def train_simplified(self) -> MlpParams:
        corpus = self.simplified_corpus()
        corpus = MixtureCorpus(tuple(g for g in corpus.groups if len(g)))
        return self._train("simplified", corpus, proportional_weights(corpus))

    def evaluate(self, models: Mapping[str, MlpParams], name: str, metadata: Mapping | None = None) -> EvalReport:
        report = EvalReport(metadata=dict(metadata or {}))
        for label, params in models.items():
            minutes = self.train_seconds(label) / 60.0
            for h in self.config.heldout_groups:
                section = eval_workload(params, self.database(h), self.workload(h), self.stats(h), self.config.cost, minutes)
                report.add(label, section)
        _atomic_write(self.report_path(name), report.to_csv())
        meta = {**report.metadata, "median_q_error": {label: report.median_q(label) for label in models}}
        _atomic_write(self.out / "reports" / f"{name}.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return report

    def eval(self) -> EvalReport:
        models = {"reference": estimator.load(self.model_path("reference"))}
        if self.model_path("simplified").exists():
            models["simplified"] = estimator.load(self.model_path("simplified"))
        return self.evaluate(models, "comparison", {"full_size": len(self.corpus()), "simplified_size": self._simplified_size()})

    def _simplified_size(self) -> int | None:
        if not self.simplified_path.exists():
            return None
        return sum(1 for line in self.simplified_path.read_text(encoding="utf-8").splitlines() if line.strip())

    def ablate(self, mode: str, group: str) -> EvalReport:
        if mode not in ("only", "exclude"):
            raise ConfigError(f"ablation mode must be 'only' or 'exclude', not {mode!r}")
        if group not in self.config.train_groups:
            raise ConfigError(f"unknown training group {group!r}")
        names = [group] if mode == "only" else [n for n in self.config.train_groups if n != group]
        if not names:
            raise ConfigError("ablation leaves no training groups")
        corpus = self.corpus(names)
        label = f"ablate_{mode}_{group}"
        cfg = matched_step_config(self.config.train, len(self.corpus()), len(corpus))
        params = self._train(label, corpus, DomainWeights.uniform(names), cfg)
        return self.evaluate({label: params}, label, {"mode": mode, "group": group, "training_groups": names, "epochs": cfg.epochs})

    def pipeline(self) -> EvalReport:
        stages = [
            ("gen", self.gen),
            ("label", self.label),
            ("stats", self.compute_stats),
            ("train-ref", self.train_reference),
            ("dro", self.dro),
            ("sample", self.sample),
            ("train", self.train_simplified),
            ("eval", self.eval),
        ]
        result = None
        for name, fn in stages:
            try:
                result = fn()
            except CardmixError as exc:
                raise type(exc)(f"stage {name}: {exc}") from exc
        return result


def matched_step_config(cfg: TrainConfig, full_size: int, subset_size: int) -> TrainConfig:
    """Scale epochs so training on ``subset_size`` examples takes as many
    optimizer steps as ``cfg`` takes on ``full_size``.

    Ablations compare mixtures, so they get the reference's step budget
    rather than a budget that shrinks with the data.
    """
    if subset_size < 1:
        raise ConfigError("cannot train on an empty corpus")
    full_steps = cfg.epochs * math.ceil(full_size / cfg.batch_size)
    per_epoch = math.ceil(subset_size / cfg.batch_size)
    return replace(cfg, epochs=max(1, round(full_steps / per_epoch)))


def proportional_weights(corpus: MixtureCorpus) -> DomainWeights:
    """Weights equal to each group's share of the examples (plain example mean)."""
    return DomainWeights.normalized(corpus.names, corpus.sizes.astype(np.float64))

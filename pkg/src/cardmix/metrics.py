"""q-error, p-error aggregation and Table-2-style reports."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataError
from .estimator import MlpParams, predict_cards
from .featurizer import encode_many
from .oracle import subquery_cards
from .plancost import CardinalitySet, CostParams, p_error
from .querygen import SpjQuery, WorkloadGroup
from .relstore import Database, SchemaStats

PERCENTILES = (50, 80, 90, 95, 99)
REPORT_COLUMNS = ("workload", "metric", "p50", "p80", "p90", "p95", "p99", "n", "excluded_zero_card", "train_minutes")

# maps a batch of queries to estimated cardinalities (each >= 1)
Estimator = Callable[[Sequence[SpjQuery]], np.ndarray]


def q_error(est: float, truth: float) -> float:
    if truth <= 0:
        raise ContractViolation("q-error is undefined for a true cardinality of 0")
    if est <= 0:
        raise ContractViolation("q-error needs a positive estimate")
    return max(est / truth, truth / est)


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if len(values) == 0:
        raise ValueError("percentile of an empty list")
    if not 0 < p <= 100:
        raise ValueError(f"percentile {p} outside (0, 100]")
    ordered = sorted(values)
    rank = math.ceil(p / 100 * len(ordered))
    return float(ordered[max(rank, 1) - 1])


def percentile_row(values: Sequence[float]) -> tuple[float, ...]:
    if len(values) == 0:
        return tuple(math.nan for _ in PERCENTILES)
    return tuple(percentile(values, p) for p in PERCENTILES)


@dataclass
class WorkloadReport:
    workload: str
    q_errors: list[float] = field(default_factory=list)
    p_errors: list[float] = field(default_factory=list)
    excluded_zero_card: int = 0
    train_minutes: float = math.nan

    @property
    def q_row(self) -> tuple[float, ...]:
        return percentile_row(self.q_errors)

    @property
    def p_row(self) -> tuple[float, ...]:
        return percentile_row(self.p_errors)

    @property
    def median_q(self) -> float:
        return percentile(self.q_errors, 50)


@dataclass
class EvalReport:
    """Sections per (model label, workload)."""

    sections: list[tuple[str, WorkloadReport]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, label: str, section: WorkloadReport) -> None:
        self.sections.append((label, section))

    def section(self, label: str, workload: str) -> WorkloadReport:
        for lab, sec in self.sections:
            if lab == label and sec.workload == workload:
                return sec
        raise KeyError((label, workload))

    def pooled_q_errors(self, label: str) -> list[float]:
        return [q for lab, sec in self.sections if lab == label for q in sec.q_errors]

    def median_q(self, label: str) -> float:
        return percentile(self.pooled_q_errors(label), 50)

    def rows(self) -> list[list]:
        out = []
        for label, sec in self.sections:
            name = f"{sec.workload}/{label}" if label else sec.workload
            for metric, row, values in (("q-error", sec.q_row, sec.q_errors), ("p-error", sec.p_row, sec.p_errors)):
                out.append([name, metric, *row, len(values), sec.excluded_zero_card, sec.train_minutes])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(round(x, 6))
    return str(x)


def model_estimator(model: MlpParams, stats: SchemaStats) -> Estimator:
    def estimate(queries: Sequence[SpjQuery]) -> np.ndarray:
        return predict_cards(model, encode_many(queries, stats))

    return estimate


def oracle_estimator(db: Database) -> Estimator:
    """Test double that answers with exact cardinalities (clamped to >= 1)."""
    from .oracle import true_cardinality

    def estimate(queries: Sequence[SpjQuery]) -> np.ndarray:
        return np.array([max(true_cardinality(db, q), 1) for q in queries], dtype=np.float64)

    return estimate


def estimated_cardinality_set(est: Estimator, q: SpjQuery, truth: Mapping[tuple[str, ...], float], base_rows: Mapping[str, int]) -> CardinalitySet:
    keys = list(truth)
    subs = [q.restrict(k) for k in keys]
    values = est(subs)
    return CardinalitySet(dict(zip(keys, (float(v) for v in values))), base_rows)


def eval_workload(
    model: MlpParams | Estimator,
    db: Database,
    group: WorkloadGroup,
    stats: SchemaStats,
    cp: CostParams = CostParams(),
    train_minutes: float = math.nan,
) -> WorkloadReport:
    """q-error and p-error of an estimator over one labeled workload.

    Queries with true cardinality 0 are skipped and counted.
    """
    est = model_estimator(model, stats) if isinstance(model, MlpParams) else model
    base_rows = {name: len(db[name]) for name in db.schema.table_names}
    report = WorkloadReport(group.group_name, train_minutes=train_minutes)
    kept = [(i, ex) for i, ex in enumerate(group.examples) if ex.cardinality >= 1]
    report.excluded_zero_card = len(group.examples) - len(kept)
    if not kept:
        return report
    estimates = est([ex.query for _, ex in kept])
    for (i, ex), e in zip(kept, estimates):
        try:
            report.q_errors.append(q_error(float(e), ex.cardinality))
            truth = subquery_cards(db, ex.query)
            C_T = CardinalitySet({k: float(v) for k, v in truth.items()}, base_rows)
            C_E = estimated_cardinality_set(est, ex.query, truth, base_rows)
            report.p_errors.append(p_error(ex.query, C_E, C_T, cp))
        except Exception as exc:
            raise DataError(f"evaluation failed on query {i} of {group.group_name}: {exc}") from exc
    return report

"""Schema-agnostic query encoding.

Nothing in a :class:`FeatureVector` depends on table or column identifiers:
every slot is a count, a pooled statistic or a log-scaled size, so the same
model can be applied to schemas it has never seen.  Slot layout::

    0-2    |tables|/8, |joins|/8, |filters|/8
    3      ln(1 + product of table sizes)/64
    4      ln(1 + AVI estimate)/64
    5-9    operator counts (=, <, >, <=, >=)/8
    10-12  min/mean/max filter selectivity (1 when there are no filters)
    13-15  min/mean/max ln(1 + ndv)/32 over filtered columns
    16-18  min/mean/max ln(1 + rows)/64 over tables
    19-21  min/mean/max ln(1 + fanout)/32 over joins
    22     fraction of equality filters
    23     1 if the query joins
    24-31  reserved, always 0
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from .querygen import FilterPred, Op, OPS, SpjQuery
from .relstore import ForeignKey, SchemaStats

DIM = 32
RESERVED = slice(24, 32)

_COUNT_SCALE = 8.0
_LOG_ROWS_SCALE = 64.0
_LOG_SMALL_SCALE = 32.0


def selectivity(f: FilterPred, stats: SchemaStats) -> float:
    """Histogram estimate of one filter's selectivity, clamped to [1/rows, 1]."""
    st = stats.column(*f.column)
    n = st.row_count
    if n == 0:
        return 0.0
    v = f.value
    if f.op is Op.EQ:
        bucket = st.bucket_of(v)
        if bucket is None:
            sel = 0.0
        else:
            prev, upper, count = bucket
            sel = max((count / n) / (upper - prev), 1.0 / max(st.ndv, 1))
    elif f.op is Op.LE:
        sel = st.fraction_le(v)
    elif f.op is Op.LT:
        sel = st.fraction_le(v - 1)
    elif f.op is Op.GT:
        sel = 1.0 - st.fraction_le(v)
    else:
        sel = 1.0 - st.fraction_le(v - 1)
    return min(max(sel, 1.0 / n), 1.0)


def avi_estimate(q: SpjQuery, stats: SchemaStats) -> float:
    """Cardinality under attribute-value independence and uniform join keys."""
    # factors are multiplied in sorted order so the result does not depend on
    # identifier names or set iteration order
    rows = sorted(stats.rows(t) for t in q.tables)
    if rows[0] == 0:
        return 0.0
    sels = sorted(selectivity(f, stats) for f in q.filters)
    keys = sorted(max(stats.column(*j.parent).ndv, 1) for j in q.joins)
    est = float(math.prod(rows))
    for s in sels:
        est *= s
    for k in keys:
        est /= k
    return est


def _pool(values: Sequence[float], empty: float) -> tuple[float, float, float]:
    if not values:
        return empty, empty, empty
    values = sorted(values)
    return values[0], math.fsum(values) / len(values), values[-1]


def encode(q: SpjQuery, stats: SchemaStats) -> np.ndarray:
    v = np.zeros(DIM)
    filters = q.filters
    joins = q.joins
    rows = sorted(stats.rows(t) for t in q.tables)

    v[0] = len(rows) / _COUNT_SCALE
    v[1] = len(joins) / _COUNT_SCALE
    v[2] = len(filters) / _COUNT_SCALE
    v[3] = math.log1p(math.prod(rows)) / _LOG_ROWS_SCALE
    v[4] = math.log1p(avi_estimate(q, stats)) / _LOG_ROWS_SCALE
    for k, op in enumerate(OPS):
        v[5 + k] = sum(f.op is op for f in filters) / _COUNT_SCALE
    v[10:13] = _pool([selectivity(f, stats) for f in filters], 1.0)
    v[13:16] = _pool([math.log1p(stats.column(*f.column).ndv) / _LOG_SMALL_SCALE for f in filters], 0.0)
    v[16:19] = _pool([math.log1p(r) / _LOG_ROWS_SCALE for r in rows], 0.0)
    v[19:22] = _pool([math.log1p(stats.fanout(ForeignKey(j.child, j.parent))) / _LOG_SMALL_SCALE for j in joins], 0.0)
    v[22] = sum(f.op is Op.EQ for f in filters) / len(filters) if filters else 0.0
    v[23] = 1.0 if joins else 0.0
    return v


def encode_many(queries: Sequence[SpjQuery], stats: SchemaStats) -> np.ndarray:
    if not queries:
        return np.zeros((0, DIM))
    return np.stack([encode(q, stats) for q in queries])

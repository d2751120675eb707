"""Series summaries, range classes, rank correlation and era handling."""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

from .errors import DegenerateInput, EmptySeries, EmptySnapshot, EraGap
from .model import (
    CweId,
    EpssSnapshot,
    EpssVersionEra,
    PecweSeries,
    Probability,
    RangeClass,
    default_eras,
)

_ONE = Decimal("1")
_LOW_CEILING = Decimal("0.10")
_HIGH_FLOOR = Decimal("0.90")


@dataclass(frozen=True)
class RoundingPolicy:
    """Decimal places used when comparing against class boundaries and for display.

    Rounding is half-up on the shortest decimal form of the float, so 0.995
    rounds to 1.00 at two places.
    """

    decimals: int = 2

    def __post_init__(self):
        if self.decimals < 0:
            raise ValueError("decimals must be >= 0")

    def quantize(self, value: float) -> Decimal:
        return Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-self.decimals), ROUND_HALF_UP)

    def format(self, value: float) -> str:
        q = self.quantize(value)
        # tiny negative values would otherwise print as -0.00
        return str(q.copy_abs() if q.is_zero() else q)


DEFAULT_ROUNDING = RoundingPolicy()


@dataclass(frozen=True)
class SeriesSummary:
    cwe: CweId
    mean_pecwe: float
    min: float
    max: float
    n_points: int
    cve_count: int
    range_class: RangeClass


def classify_range(series: PecweSeries | Sequence[float], policy: RoundingPolicy = DEFAULT_ROUNDING) -> RangeClass:
    """Exploited if every rounded value is 1, Low if all are <= 0.10,
    High if all exceed 0.90, otherwise Variable."""
    values = series.values if isinstance(series, PecweSeries) else list(series)
    if not values:
        raise EmptySeries("cannot classify an empty series")
    rounded = [policy.quantize(v) for v in values]
    if all(r == _ONE for r in rounded):
        return RangeClass.EXPLOITED
    if all(r <= _LOW_CEILING for r in rounded):
        return RangeClass.LOW
    if all(r > _HIGH_FLOOR for r in rounded):
        return RangeClass.HIGH
    return RangeClass.VARIABLE


def summarize(series: PecweSeries, closure_size: int,
              policy: RoundingPolicy = DEFAULT_ROUNDING) -> SeriesSummary:
    """Mean, extremes and range class over the points present in ``series``."""
    values = series.values
    if not values:
        raise EmptySeries(f"{series.cwe}: series has no points")
    lo, hi = min(values), max(values)
    mean = min(max(math.fsum(values) / len(values), lo), hi)
    return SeriesSummary(series.cwe, Probability(mean), lo, hi, len(values),
                         closure_size, classify_range(values, policy))


def fraction_of_points_above(series: PecweSeries, cutoff: float) -> float:
    """Share of windows whose value is at least ``cutoff``."""
    values = series.values
    if not values:
        raise EmptySeries(f"{series.cwe}: series has no points")
    return sum(v >= cutoff for v in values) / len(values)


def average_ranks(values: Sequence[float]) -> list:
    """1-based ranks with tied values sharing the mean of their positions."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman_rho(pairs: Iterable[tuple]) -> float:
    """Pearson correlation of the average ranks of each coordinate."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise DegenerateInput("need at least two pairs")
    xs = [float(x) for x, _ in pairs]
    ys = [float(y) for _, y in pairs]
    if any(math.isnan(v) for v in xs + ys):
        raise ValueError("NaN in correlation input")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise DegenerateInput("a constant variable has no rank correlation")
    rx, ry = average_ranks(xs), average_ranks(ys)
    mx, my = math.fsum(rx) / len(rx), math.fsum(ry) / len(ry)
    dx = [r - mx for r in rx]
    dy = [r - my for r in ry]
    cov = math.fsum(a * b for a, b in zip(dx, dy))
    var = math.fsum(a * a for a in dx) * math.fsum(b * b for b in dy)
    return max(-1.0, min(1.0, cov / math.sqrt(var)))


def frequency_correlation(summaries: Sequence[SeriesSummary]) -> float:
    """Rank correlation between closure size and mean value across weaknesses."""
    if len(summaries) < 2:
        raise DegenerateInput("need at least two summaries")
    return spearman_rho((s.cve_count, s.mean_pecwe) for s in summaries)


def score_fraction_below(snapshot: EpssSnapshot, cutoff: float) -> float:
    if len(snapshot) == 0:
        raise EmptySnapshot(f"snapshot {snapshot.score_date} has no scores")
    below = sum(1 for p in snapshot.scores.values() if p < cutoff)
    return below / len(snapshot)


def split_by_era(series: PecweSeries, eras: Sequence[EpssVersionEra] | None = None) -> list:
    """Partition ``series`` into ``(era, sub_series)`` pairs, omitting empty eras."""
    eras = default_eras() if eras is None else tuple(eras)
    buckets: dict = {era: [] for era in eras}
    for day, value in series.points:
        for era in eras:
            if day in era:
                buckets[era].append((day, value))
                break
        else:
            raise EraGap(f"{day} falls outside every EPSS era")
    return [
        (era, PecweSeries(series.cwe, tuple(points), f"{series.schedule_label} {era.label}".strip()))
        for era, points in buckets.items() if points
    ]


@dataclass(frozen=True)
class EraBoundary:
    """Change across an era boundary; ``delta`` is ``None`` if one side has no points."""

    day: _dt.date
    from_version: int
    to_version: int
    delta: float | None


def era_boundaries(series: PecweSeries, eras: Sequence[EpssVersionEra] | None = None) -> list:
    """Era start dates falling strictly after the first point and on or before the last."""
    eras = default_eras() if eras is None else tuple(eras)
    if not series.points:
        return []
    first, last = series.points[0][0], series.points[-1][0]
    out = []
    for prev, era in zip(eras, eras[1:]):
        if not first < era.start <= last:
            continue
        before = [v for d, v in series.points if d in prev]
        after = [v for d, v in series.points if d in era]
        delta = after[0] - before[-1] if before and after else None
        out.append(EraBoundary(era.start, prev.version, era.version, delta))
    return out

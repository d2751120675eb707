"""Probability that at least one CVE carrying a weakness is exploited.

For a weakness ``x`` and score date ``d``::

    PECWE(x, d) = 1 - prod_{y in S_x} (1 - EPSS(y, d))

where ``S_x`` is the set of CVEs assigned to ``x`` or to any of its View-1003
descendants. The product treats CVE exploitation events as independent;
nothing here models correlation between CVEs. CVEs without a score on ``d``
(including ones not yet published) contribute a factor of exactly one.

The product is accumulated as a sum of ``log1p(-p)`` terms: a closure of
tens of thousands of CVEs would otherwise underflow and silently report 1.0.
"""

from __future__ import annotations

import datetime as _dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import UnknownCwe
from .model import CveCweIndex, CweCatalog, CweId, EpssSnapshot, PecweSeries, Probability

WEDNESDAY = 2
# Any score at least this close to 1 makes the union certain.
CERTAIN_SCORE = 1.0 - 1e-12


@dataclass(frozen=True)
class CveClosure:
    cwe: CweId
    members: frozenset
    source_catalog_label: str = ""

    def __len__(self) -> int:
        return len(self.members)


def cve_closure(catalog: CweCatalog, index: CveCweIndex, cwe: CweId) -> CveClosure:
    """Union of CVEs assigned to ``cwe`` and to every descendant of it."""
    if cwe not in catalog:
        raise UnknownCwe(cwe)
    members = set(index.cves_for(cwe))
    for child in catalog.descendants(cwe):
        members |= index.cves_for(child)
    return CveClosure(cwe, frozenset(members), catalog.snapshot_label)


def pecwe_from_scores(scores: Iterable[float]) -> Probability:
    """Union probability of independent events with the given probabilities.

    The result is order independent, unchanged by zero scores, and kept
    inside ``[max(scores), min(1, sum(scores))]``.
    """
    logs = []
    positive = []
    for p in scores:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"score {p!r} outside [0, 1]")
        if p == 0.0:
            continue
        if p >= CERTAIN_SCORE:
            return Probability(1.0)
        positive.append(p)
        logs.append(math.log1p(-p))
    if not positive:
        return Probability(0.0)
    top = max(positive)
    if len(positive) == 1:
        return Probability(top)
    value = -math.expm1(math.fsum(logs))
    upper = min(1.0, math.fsum(positive))
    return Probability(min(max(value, top), upper))


def pecwe(closure: CveClosure, snapshot: EpssSnapshot) -> Probability:
    scores = snapshot.scores
    return pecwe_from_scores(scores.get(cve, 0.0) for cve in closure.members)


def weekly_schedule(start: _dt.date, end: _dt.date, anchor_weekday: int = WEDNESDAY) -> list:
    """Every date in ``[start, end]`` falling on ``anchor_weekday`` (Monday=0)."""
    if start > end:
        raise ValueError("schedule start is after schedule end")
    if not 0 <= anchor_weekday <= 6:
        raise ValueError("anchor_weekday must be in 0..6")
    first = start + _dt.timedelta(days=(anchor_weekday - start.weekday()) % 7)
    out = []
    day = first
    while day <= end:
        out.append(day)
        day += _dt.timedelta(days=7)
    return out


def pecwe_series(catalog: CweCatalog, index: CveCweIndex, cwe: CweId,
                 schedule: Sequence[_dt.date],
                 snapshot_provider: Callable[[_dt.date], EpssSnapshot | None],
                 schedule_label: str = "", closure: CveClosure | None = None) -> PecweSeries:
    """Series of weekly values; dates whose snapshot is unavailable are skipped.

    The closure is computed once for the whole schedule, which is valid
    because unpublished CVEs simply have no score yet.
    """
    if closure is None:
        closure = cve_closure(catalog, index, cwe)
    points = []
    for day in schedule:
        snapshot = snapshot_provider(day)
        if snapshot is not None:
            points.append((day, pecwe(closure, snapshot)))
    return PecweSeries(cwe, tuple(points), schedule_label)


def pecwe_series_many(closures: Sequence[CveClosure], schedule: Sequence[_dt.date],
                      snapshot_provider: Callable[[_dt.date], EpssSnapshot | None],
                      schedule_label: str = "", workers: int = 1) -> dict:
    """Series for several closures, fetching each snapshot only once.

    Per-date values are computed across up to ``workers`` threads; results
    are assembled in schedule order, so output does not depend on
    scheduling.
    """
    points: dict = {c.cwe: [] for c in closures}
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for day in schedule:
            snapshot = snapshot_provider(day)
            if snapshot is None:
                continue
            if pool is None:
                values = [pecwe(c, snapshot) for c in closures]
            else:
                values = list(pool.map(lambda c: pecwe(c, snapshot), closures))
            for closure, value in zip(closures, values):
                points[closure.cwe].append((day, value))
    finally:
        if pool is not None:
            pool.shutdown()
    return {cwe: PecweSeries(cwe, tuple(pts), schedule_label) for cwe, pts in points.items()}

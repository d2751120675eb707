"""Detection of Drop, Jump, Stable, StepUp and StepDown segments.

The named patterns only have prose definitions, so the detectors are
parameterized:

* Jump / Drop: a rise (fall) of at least ``threshold`` reached within
  ``abrupt_span`` consecutive points. Back-to-back abrupt moves in the same
  direction merge into one segment.
* StepUp / StepDown: at least ``min_step_span`` points, a net rise (fall) of
  at least ``threshold``, no single step of ``threshold`` or more, and at
  least ``monotone_fraction`` of the steps going the right way.
* Stable: at least ``min_stable_span`` points whose max - min stays below
  ``threshold``.

Segments of different kinds may overlap. Within one kind they are disjoint;
each is found by a left-to-right scan that takes the earliest start and then
the furthest end that still satisfies the predicate. Detection is meant to
run on a single EPSS era at a time (see :func:`detect_patterns_by_era`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .analytics import era_boundaries, split_by_era
from .errors import TooShort
from .model import EpssVersionEra, PatternKind, PatternSegment, PecweSeries

DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class PatternParams:
    abrupt_span: int = 2
    min_step_span: int = 5
    monotone_fraction: float = 0.8
    min_stable_span: int = 3

    def __post_init__(self):
        if self.abrupt_span < 1:
            raise ValueError("abrupt_span must be >= 1")
        if self.min_step_span <= self.abrupt_span:
            raise ValueError("min_step_span must exceed abrupt_span")
        if not 0.5 < self.monotone_fraction <= 1.0:
            raise ValueError("monotone_fraction must be in (0.5, 1]")
        if self.min_stable_span < 2:
            raise ValueError("min_stable_span must be >= 2")


def _abrupt(values, threshold, span, sign):
    n = len(values)

    def reach(i):
        for k in range(1, span):
            if i + k < n and sign * (values[i + k] - values[i]) >= threshold:
                return i + k
        return None

    out = []
    i = 0
    while i < n - 1:
        j = reach(i)
        if j is None:
            i += 1
            continue
        start = i
        while (nxt := reach(j)) is not None:
            j = nxt
        out.append((start, j))
        i = j + 1
    return out


def _gentle(values, threshold, params, sign):
    n = len(values)
    out = []
    s = 0
    while s < n - 1:
        best = None
        forward = 0
        for e in range(s + 1, n):
            step = sign * (values[e] - values[e - 1])
            if abs(step) >= threshold:
                break
            forward += step >= 0
            if (e - s + 1 >= params.min_step_span
                    and sign * (values[e] - values[s]) >= threshold
                    and forward / (e - s) >= params.monotone_fraction):
                best = e
        if best is None:
            s += 1
        else:
            out.append((s, best))
            s = best + 1
    return out


def _stable(values, threshold, min_span):
    n = len(values)
    out = []
    s = 0
    while s < n:
        lo = hi = values[s]
        e = s
        while e + 1 < n and max(hi, values[e + 1]) - min(lo, values[e + 1]) < threshold:
            e += 1
            lo, hi = min(lo, values[e]), max(hi, values[e])
        if e - s + 1 >= min_span:
            out.append((s, e))
            s = e + 1
        else:
            s += 1
    return out


def detect_patterns(series: PecweSeries, threshold: float = DEFAULT_THRESHOLD,
                    params: PatternParams | None = None) -> list:
    """Pattern segments of ``series`` ordered by start date, end date, kind."""
    params = params or PatternParams()
    if len(series) < 2:
        raise TooShort(f"{series.cwe}: pattern detection needs at least 2 points, got {len(series)}")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    dates, values = series.dates, series.values
    found = []
    for kind, spans in (
        (PatternKind.JUMP, _abrupt(values, threshold, params.abrupt_span, +1)),
        (PatternKind.DROP, _abrupt(values, threshold, params.abrupt_span, -1)),
        (PatternKind.STEP_UP, _gentle(values, threshold, params, +1)),
        (PatternKind.STEP_DOWN, _gentle(values, threshold, params, -1)),
        (PatternKind.STABLE, _stable(values, threshold, params.min_stable_span)),
    ):
        found.extend((s, e, kind) for s, e in spans)
    found.sort(key=lambda t: (t[0], t[1], t[2].value))
    return [PatternSegment(kind, dates[s], dates[e], values[e] - values[s]) for s, e, kind in found]


def detect_patterns_by_era(series: PecweSeries, eras: Sequence[EpssVersionEra] | None = None,
                           threshold: float = DEFAULT_THRESHOLD,
                           params: PatternParams | None = None) -> tuple:
    """Run :func:`detect_patterns` within each era.

    Returns ``(per_era, boundaries)`` where ``per_era`` is a list of
    ``(era, segments)`` and ``boundaries`` lists the cross-era changes,
    which are reported separately rather than as patterns.
    """
    per_era = [(era, detect_patterns(sub, threshold, params))
               for era, sub in split_by_era(series, eras)]
    return per_era, era_boundaries(series, eras)

from __future__ import annotations

import datetime as dt
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pecwe.errors import TooShort
from pecwe.model import PatternKind
from pecwe.patterns import PatternParams, detect_patterns, detect_patterns_by_era

from conftest import weekly_series

JUMP, DROP, STABLE, UP, DOWN = (PatternKind.JUMP, PatternKind.DROP, PatternKind.STABLE,
                                PatternKind.STEP_UP, PatternKind.STEP_DOWN)

# dyadic values make 1 - v and every difference exact in binary floating point
dyadic = st.integers(0, 1024).map(lambda k: k / 1024)
dyadic_series = st.lists(dyadic, min_size=2, max_size=30)


def spans(values, **kw):
    series = weekly_series(values)
    index = {d: i for i, d in enumerate(series.dates)}
    return [(s.kind, index[s.start], index[s.end]) for s in detect_patterns(series, **kw)]


def oracle(values, threshold=Fraction(1, 10), min_step=5, monotone=Fraction(4, 5), min_stable=3):
    """Enumerate every interval and keep greedy leftmost/furthest matches per kind.

    Exact rational arithmetic; valid for the default abrupt span of 2, where
    an abrupt segment is a run of steps that each move by the threshold.
    """
    v = [Fraction(x) for x in values]
    n = len(v)
    step = [v[i + 1] - v[i] for i in range(n - 1)]

    def abrupt(sign):
        return lambda s, e: all(sign * step[i] >= threshold for i in range(s, e))

    def gentle(sign):
        def ok(s, e):
            if e - s + 1 < min_step or any(abs(step[i]) >= threshold for i in range(s, e)):
                return False
            forward = sum(sign * step[i] >= 0 for i in range(s, e))
            return sign * (v[e] - v[s]) >= threshold and Fraction(forward, e - s) >= monotone
        return ok

    def stable(s, e):
        return e - s + 1 >= min_stable and max(v[s:e + 1]) - min(v[s:e + 1]) < threshold

    out = []
    for kind, ok in ((JUMP, abrupt(1)), (DROP, abrupt(-1)), (UP, gentle(1)), (DOWN, gentle(-1)), (STABLE, stable)):
        s = 0
        while s < n:
            ends = [e for e in range(s + 1, n) if ok(s, e)]
            if ends:
                out.append((kind, s, max(ends)))
                s = max(ends) + 1
            else:
                s += 1
    return sorted(out, key=lambda t: (t[1], t[2], t[0].value))


class TestHandFixtures:
    def test_flat(self):
        assert spans([0.5, 0.5, 0.5]) == [(STABLE, 0, 2)]

    def test_jump(self):
        (seg,) = detect_patterns(weekly_series([0.2, 0.2, 0.8, 0.8]))
        assert seg.kind is JUMP
        assert (seg.start, seg.end) == (dt.date(2021, 4, 21), dt.date(2021, 4, 28))
        assert seg.delta == pytest.approx(0.6)

    def test_drop(self):
        assert spans([0.8, 0.8, 0.2, 0.2]) == [(DROP, 1, 2)]

    def test_step_up(self):
        (seg,) = detect_patterns(weekly_series([0.2, 0.25, 0.31, 0.37, 0.44, 0.5]))
        assert seg.kind is UP
        assert (seg.start, seg.end) == (dt.date(2021, 4, 14), dt.date(2021, 5, 19))
        assert seg.delta == pytest.approx(0.3)

    def test_step_down(self):
        assert spans([0.5, 0.44, 0.37, 0.31, 0.25, 0.2]) == [(DOWN, 0, 5)]

    def test_stable_then_jump_overlap(self):
        assert spans([0.3, 0.32, 0.31, 0.7, 0.71, 0.7]) == [(STABLE, 0, 2), (JUMP, 2, 3), (STABLE, 3, 5)]

    def test_chained_jump(self):
        assert spans([0.1, 0.3, 0.5, 0.55]) == [(JUMP, 0, 2)]

    def test_mostly_monotone(self):
        # one small setback out of six steps still counts as gentle ascent
        assert (UP, 0, 6) in spans([0.1, 0.15, 0.2, 0.18, 0.24, 0.3, 0.35])

    def test_too_short(self):
        with pytest.raises(TooShort):
            detect_patterns(weekly_series([0.5]))

    def test_two_flat_points_are_not_stable(self):
        assert spans([0.5, 0.5]) == []

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            detect_patterns(weekly_series([0.5, 0.5]), threshold=0)


class TestParams:
    @pytest.mark.parametrize("kw", [
        {"abrupt_span": 0}, {"min_step_span": 2}, {"monotone_fraction": 0.5},
        {"monotone_fraction": 1.01}, {"min_stable_span": 1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PatternParams(**kw)

    def test_wider_abrupt_span(self):
        values = [0.2, 0.26, 0.32, 0.32]
        # two 0.06 steps: no single step is abrupt under the default span
        assert spans(values) == [(STABLE, 1, 3)]
        assert (JUMP, 0, 2) in spans(values, params=PatternParams(abrupt_span=3, min_step_span=5))


class TestProperties:
    @settings(max_examples=300)
    @given(dyadic_series)
    def test_matches_interval_oracle(self, values):
        assert spans(values) == oracle(values)

    @settings(max_examples=300)
    @given(dyadic_series)
    def test_mirror_symmetry(self, values):
        base = detect_patterns(weekly_series(values))
        mirrored = detect_patterns(weekly_series([1 - v for v in values]))
        key = lambda s: (s.start, s.end, s.kind.value)
        expected = sorted(((s.kind.mirrored(), s.start, s.end, -s.delta) for s in base),
                          key=lambda t: (t[1], t[2], t[0].value))
        assert [(s.kind, s.start, s.end, s.delta) for s in sorted(mirrored, key=key)] == expected

    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=40), st.floats(0.01, 0.5))
    def test_thresholds_respected(self, values, threshold):
        series = weekly_series(values)
        index = {d: i for i, d in enumerate(series.dates)}
        for seg in detect_patterns(series, threshold):
            window = values[index[seg.start]: index[seg.end] + 1]
            if seg.kind is STABLE:
                assert max(window) - min(window) < threshold
            else:
                assert abs(seg.delta) >= threshold
                assert (seg.delta > 0) == (seg.kind in (JUMP, UP))

    @given(dyadic_series)
    def test_disjoint_within_kind(self, values):
        by_kind = {}
        for seg in detect_patterns(weekly_series(values)):
            by_kind.setdefault(seg.kind, []).append(seg)
        for segs in by_kind.values():
            for a, b in zip(segs, segs[1:]):
                assert a.end < b.start


def test_by_era_keeps_boundary_out_of_patterns():
    # flat at 0.3 in v1, flat at 0.8 in v2: the cliff is an era change, not a Jump
    start = dt.date(2022, 1, 5)
    series = weekly_series([0.3] * 5 + [0.8] * 5, start=start)
    per_era, boundaries = detect_patterns_by_era(series)
    assert [(era.version, [s.kind for s in segs]) for era, segs in per_era] == [(1, [STABLE]), (2, [STABLE])]
    assert len(boundaries) == 1 and boundaries[0].delta == pytest.approx(0.5)
    assert JUMP in [s.kind for s in detect_patterns(series)]

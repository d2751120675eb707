from __future__ import annotations

import datetime as dt
import math
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pecwe.analytics import (
    RoundingPolicy,
    SeriesSummary,
    average_ranks,
    classify_range,
    era_boundaries,
    fraction_of_points_above,
    frequency_correlation,
    score_fraction_below,
    spearman_rho,
    split_by_era,
    summarize,
)
from pecwe.errors import DegenerateInput, EmptySeries, EmptySnapshot, EraGap
from pecwe.model import CveId, CweId, EpssSnapshot, PecweSeries, RangeClass

from conftest import weekly_series

EXPLOITED, HIGH, VARIABLE, LOW = RangeClass.EXPLOITED, RangeClass.HIGH, RangeClass.VARIABLE, RangeClass.LOW


def oracle_rho(pairs):
    """Average ranks by counting, then Pearson in exact rationals."""
    def ranks(vals):
        return [Fraction(2 * sum(w < x for w in vals) + sum(w == x for w in vals) + 1, 2) for x in vals]

    rx, ry = ranks([p[0] for p in pairs]), ranks([p[1] for p in pairs])
    n = len(pairs)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    var = sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)
    return math.copysign(math.sqrt(cov * cov / var), cov) if cov else 0.0


class TestRounding:
    def test_half_up_on_shortest_repr(self):
        policy = RoundingPolicy()
        assert policy.format(0.995) == "1.00"
        assert policy.format(0.105) == "0.11"
        assert policy.format(0.905) == "0.91"
        assert policy.format(0.9049999) == "0.90"
        assert policy.format(-1e-9) == "0.00"
        assert RoundingPolicy(4).format(0.12345) == "0.1235"

    def test_negative_decimals(self):
        with pytest.raises(ValueError):
            RoundingPolicy(-1)


class TestSummarize:
    def test_constant_one(self):
        s = summarize(weekly_series([1.0, 1.0, 1.0]), 25177)
        assert s.mean_pecwe == 1.0 and s.range_class is EXPLOITED

    def test_low(self):
        s = summarize(weekly_series([0.02, 0.02], cwe=CweId(920)), 3)
        assert RoundingPolicy().format(s.mean_pecwe) == "0.02"
        assert s.cve_count == 3 and s.range_class is LOW

    def test_mean(self):
        assert summarize(weekly_series([0.0, 1.0]), 2).mean_pecwe == 0.5

    def test_empty(self):
        with pytest.raises(EmptySeries):
            summarize(PecweSeries(CweId(79), ()), 0)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
    def test_invariants(self, values):
        s = summarize(weekly_series(values), 1)
        assert s.min <= s.mean_pecwe <= s.max
        assert s.range_class is classify_range(values)
        policy = RoundingPolicy()
        if s.range_class is EXPLOITED:
            assert policy.quantize(s.mean_pecwe) == 1
        if s.range_class is LOW:
            assert policy.quantize(s.max) <= Decimal("0.10")


class TestClassify:
    @pytest.mark.parametrize("values, expected", [
        ([1.0] * 5, EXPLOITED),
        ([0.92, 0.95, 0.99], HIGH),
        ([0.0, 0.05, 0.10], LOW),
        ([0.5, 0.95], VARIABLE),
        ([0.05, 0.95], VARIABLE),
        ([0.95, 1.0], HIGH),
    ])
    def test_examples(self, values, expected):
        assert classify_range(values) is expected

    @pytest.mark.parametrize("value, expected", [
        (0.104999, LOW), (0.105, VARIABLE), (0.10, LOW), (0.1000001, LOW),
        (0.90, VARIABLE), (0.904999, VARIABLE), (0.905, HIGH),
        (0.994999, HIGH), (0.995, EXPLOITED), (0.9999999, EXPLOITED),
    ])
    def test_boundaries(self, value, expected):
        assert classify_range([value, value]) is expected

    def test_configurable_precision(self):
        assert classify_range([0.996]) is EXPLOITED
        assert classify_range([0.996], RoundingPolicy(3)) is HIGH

    def test_empty(self):
        with pytest.raises(EmptySeries):
            classify_range([])


class TestSpearman:
    def test_monotone(self):
        assert spearman_rho([(1, 1), (2, 4), (3, 9)]) == 1.0

    def test_antitone(self):
        assert spearman_rho([(1, 3), (2, 2), (3, 1)]) == -1.0

    def test_hand_computed_ties(self):
        # x ranks 1,2,3,4; y ranks 2.5,2.5,1,4; cov 1.5, var_x 5, var_y 4.5
        expected = 1.5 / math.sqrt(5 * 4.5)
        assert expected == pytest.approx(1 / math.sqrt(10), abs=1e-15)
        assert spearman_rho([(1, 2), (2, 2), (3, 1), (4, 4)]) == pytest.approx(expected, abs=1e-12)

    def test_average_ranks(self):
        assert average_ranks([10, 20, 20, 5]) == [2.0, 3.5, 3.5, 1.0]

    @pytest.mark.parametrize("pairs", [[(1, 1)], [(1, 1), (1, 2)], [(1, 5), (2, 5), (3, 5)]])
    def test_degenerate(self, pairs):
        with pytest.raises(DegenerateInput):
            spearman_rho(pairs)

    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=2, max_size=15))
    def test_matches_oracle(self, pairs):
        assume(len({x for x, _ in pairs}) > 1 and len({y for _, y in pairs}) > 1)
        rho = spearman_rho(pairs)
        assert -1.0 <= rho <= 1.0
        assert abs(rho - oracle_rho(pairs)) <= 1e-12

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=20))
    def test_cube_invariance(self, pairs):
        assume(len({x for x, _ in pairs}) > 1 and len({y for _, y in pairs}) > 1)
        cubed = [(x ** 3, y) for x, y in pairs]
        assume(len({x for x, _ in cubed}) == len({x for x, _ in pairs}))
        assert spearman_rho(cubed) == spearman_rho(pairs)

    @given(st.sets(st.integers(-10 ** 6, 10 ** 6), min_size=2, max_size=100))
    def test_increasing_pairing(self, xs):
        xs = sorted(xs)
        assert spearman_rho([(x, 2 * x + 1) for x in xs]) == 1.0


def summary(count, mean, cwe=79):
    return SeriesSummary(CweId(cwe), mean, mean, mean, 1, count, RangeClass.VARIABLE)


class TestFrequencyCorrelation:
    def test_monotone(self):
        assert frequency_correlation([summary(n, n / 100) for n in (3, 10, 50, 99)]) == 1.0

    def test_swapped(self):
        assert frequency_correlation([summary(3, 0.9), summary(10, 0.1)]) == -1.0

    def test_ten_summaries_against_oracle(self):
        counts = [3, 17, 17, 250, 40, 9, 1200, 88, 5, 640]
        means = [0.02, 0.41, 0.38, 0.99, 0.41, 0.05, 1.0, 0.93, 0.05, 1.0]
        rho = frequency_correlation([summary(c, m, i + 1) for i, (c, m) in enumerate(zip(counts, means))])
        assert rho == pytest.approx(oracle_rho(list(zip(counts, means))), abs=1e-12)

    def test_single(self):
        with pytest.raises(DegenerateInput):
            frequency_correlation([summary(3, 0.5)])


class TestScoreFraction:
    def snap(self, *scores):
        return EpssSnapshot(dt.date(2023, 10, 4), "v3", {CveId(2021, i + 1): p for i, p in enumerate(scores)})

    def test_half(self):
        assert score_fraction_below(self.snap(0.05, 0.5), 0.1) == 0.5

    def test_all(self):
        assert score_fraction_below(self.snap(0.01, 0.02), 0.1) == 1.0

    def test_strict(self):
        assert score_fraction_below(self.snap(0.1), 0.1) == 0.0

    def test_empty(self):
        with pytest.raises(EmptySnapshot):
            score_fraction_below(self.snap(), 0.1)


def test_fraction_of_points_above():
    assert fraction_of_points_above(weekly_series([0.95, 0.85, 0.9, 1.0]), 0.9) == 0.75


class TestEras:
    def full(self):
        return weekly_series([0.5] * 152)

    def test_three_sub_series(self):
        parts = split_by_era(self.full())
        assert [era.version for era, _ in parts] == [1, 2, 3]
        assert parts[1][1].dates[0] == dt.date(2022, 2, 9)
        assert parts[2][1].dates[0] == dt.date(2023, 3, 8)
        assert parts[1][1].dates[-1] < dt.date(2023, 3, 7)

    def test_single_era(self):
        series = weekly_series([0.1, 0.2], start=dt.date(2022, 6, 1))
        ((era, sub),) = split_by_era(series)
        assert era.version == 2 and sub.points == series.points

    def test_gap(self):
        with pytest.raises(EraGap):
            split_by_era(weekly_series([0.1], start=dt.date(2021, 1, 6)))

    @given(st.integers(0, 151), st.integers(1, 152))
    def test_concatenation_reproduces_input(self, offset, length):
        series = weekly_series([i / 1000 for i in range(min(length, 152 - offset))],
                               start=dt.date(2021, 4, 14) + dt.timedelta(weeks=offset))
        joined = tuple(p for _, sub in split_by_era(series) for p in sub.points)
        assert joined == series.points

    def test_boundaries(self):
        # index 42 is 2022-02-02, the last v1 point
        series = weekly_series([0.3] * 43 + [0.2] * 109)
        marks = era_boundaries(series)
        assert [(b.day, b.from_version, b.to_version) for b in marks] == [
            (dt.date(2022, 2, 4), 1, 2), (dt.date(2023, 3, 7), 2, 3)]
        assert marks[0].delta == 0.2 - 0.3
        assert marks[1].delta == 0.0

    def test_boundary_delta(self):
        days = [dt.date(2022, 1, 26), dt.date(2022, 2, 2), dt.date(2022, 2, 9)]
        series = PecweSeries(CweId(79), tuple(zip(days, (0.25, 0.5, 0.125))))
        (mark,) = era_boundaries(series)
        assert mark.delta == -0.375

    def test_no_boundary_outside_span(self):
        assert era_boundaries(weekly_series([0.1, 0.2], start=dt.date(2022, 6, 1))) == []

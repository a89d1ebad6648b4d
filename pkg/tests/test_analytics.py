"""Statistics primitives, evaluation reports, and the energy model."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from coolguard.analytics import (
    Confusion,
    betainc_reg,
    cohen_d,
    energy_savings,
    evaluate_detector,
    evaluate_forecaster,
    integrated_coverage,
    pearson,
    t_sf_two_sided,
    welch_df,
    welch_t,
)
from coolguard.lstm import Calibration
from coolguard.model import (
    NS_PER_HOUR,
    NS_PER_MINUTE,
    DetectionResult,
    LabeledWindow,
    LeakEvent,
    SteadyState,
)

START_NS = 1_700_000_000_000_000_000


def _event(onset_minute: int, duration: int, event_id: str = "ep-1") -> LeakEvent:
    return LeakEvent(
        id=event_id,
        rack_id="rack-01",
        onset=START_NS + onset_minute * NS_PER_MINUTE,
        ramp_minutes=2,
        duration_minutes=duration,
        severity=0.8,
        steady_state=SteadyState(pressure=1.7, flow=1.2, humidity=58.0),
    )


def _detection(minute_offset_ns: int, is_leak: bool = True) -> DetectionResult:
    return DetectionResult(
        issued_at=minute_offset_ns,
        rack_id="rack-01",
        is_leak=is_leak,
        vote_score=0.9 if is_leak else 0.1,
    )


class TestPearson:
    def test_self_correlation_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=200)
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_negation_is_minus_one(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=200)
        assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(3, 80))
            x = rng.normal(size=n)
            y = 0.4 * x + rng.normal(size=n)
            expected = scipy.stats.pearsonr(x, y).statistic
            assert pearson(x, y) == pytest.approx(expected, abs=1e-10)

    def test_constant_input_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_result_stays_in_unit_interval(self):
        # Near-collinear input can push the naive ratio past 1 ulp-wise.
        x = np.linspace(0, 1, 50)
        assert abs(pearson(x, 2 * x + 1e-15)) <= 1.0


class TestIncompleteBeta:
    def test_endpoints(self):
        assert betainc_reg(2.0, 3.0, 0.0) == 0.0
        assert betainc_reg(2.0, 3.0, 1.0) == 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            betainc_reg(1.0, 1.0, 1.5)

    def test_matches_scipy_grid(self):
        for a in (0.5, 1.0, 2.5, 8.0, 40.0):
            for b in (0.5, 1.0, 2.5, 8.0, 40.0):
                for x in (0.01, 0.2, 0.5, 0.8, 0.99):
                    expected = scipy.special.betainc(a, b, x)
                    assert betainc_reg(a, b, x) == pytest.approx(expected, abs=1e-10)


class TestTSurvival:
    def test_zero_statistic_gives_p_one(self):
        assert t_sf_two_sided(0.0, 8.0) == pytest.approx(1.0, abs=1e-12)

    def test_matches_scipy_grid(self):
        for t in (0.1, 0.5, 1.0, 2.0, 3.5, 6.0):
            for df in (1.0, 2.0, 4.5, 10.0, 30.0, 120.0):
                expected = 2.0 * scipy.stats.t.sf(abs(t), df)
                assert t_sf_two_sided(t, df) == pytest.approx(expected, abs=1e-9)

    def test_monotone_in_magnitude(self):
        ps = [t_sf_two_sided(t, 8.0) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(ps, ps[1:]))

    def test_nonpositive_df_rejected(self):
        with pytest.raises(ValueError):
            t_sf_two_sided(1.0, 0.0)


class TestWelch:
    def test_identical_samples(self):
        t, p = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0
        assert p == 1.0

    def test_shifted_unit_fixture(self):
        """Hand-computed: equal variances 2.5, means 3 vs 4, n=5 each."""
        a = [1.0, 2.0, 3.0, 4.0, 5.0]
        b = [2.0, 3.0, 4.0, 5.0, 6.0]
        t, p = welch_t(a, b)
        assert t == pytest.approx(-1.0, abs=1e-9)
        assert welch_df(a, b) == pytest.approx(8.0, abs=1e-9)
        assert p == pytest.approx(0.346594, abs=1e-6)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            na, nb = int(rng.integers(2, 40)), int(rng.integers(2, 40))
            a = rng.normal(0.0, 1.0, size=na)
            b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 3.0), size=nb)
            res = scipy.stats.ttest_ind(a, b, equal_var=False)
            t, p = welch_t(a, b)
            assert t == pytest.approx(float(res.statistic), abs=1e-9)
            assert p == pytest.approx(float(res.pvalue), abs=1e-8)
            assert welch_df(a, b) == pytest.approx(float(res.df), abs=1e-9)

    def test_degenerate_constant_samples(self):
        t, p = welch_t([2.0, 2.0, 2.0], [2.0, 2.0])
        assert (t, p) == (0.0, 1.0)
        t, p = welch_t([3.0, 3.0], [2.0, 2.0, 2.0])
        assert t == math.inf and p == 0.0

    def test_undersized_sample_rejected(self):
        with pytest.raises(ValueError):
            welch_t([1.0], [1.0, 2.0])

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=15),
        st.lists(st.floats(-50, 50), min_size=2, max_size=15),
    )
    @settings(max_examples=150, deadline=None)
    def test_antisymmetric_in_sample_order(self, a, b):
        t_ab, p_ab = welch_t(a, b)
        t_ba, p_ba = welch_t(b, a)
        assert t_ab == -t_ba or (math.isinf(t_ab) and math.isinf(t_ba))
        assert p_ab == pytest.approx(p_ba, abs=1e-12)


class TestCohenD:
    def test_identical_samples_give_zero(self):
        assert cohen_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_unit_shift_fixture(self):
        # pooled variance 2.5 -> d = -1/sqrt(2.5)
        a = [1.0, 2.0, 3.0, 4.0, 5.0]
        b = [2.0, 3.0, 4.0, 5.0, 6.0]
        assert cohen_d(a, b) == pytest.approx(-1.0 / math.sqrt(2.5), abs=1e-12)

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(4)
        a = rng.normal(0, 1, 30)
        b = rng.normal(1, 2, 25)
        base = cohen_d(a, b)
        assert cohen_d(a + 7.0, b + 7.0) == pytest.approx(base, abs=1e-12)
        assert cohen_d(a * 3.0, b * 3.0) == pytest.approx(base, abs=1e-10)

    def test_zero_pooled_stddev_rejected(self):
        with pytest.raises(ValueError, match="pooled"):
            cohen_d([5.0, 5.0], [3.0, 3.0])

    def test_undersized_sample_rejected(self):
        with pytest.raises(ValueError):
            cohen_d([1.0, 2.0], [4.0])


class TestConfusion:
    def test_metric_identities(self):
        c = Confusion(tp=486, fp=23, fn=14, tn=9557)
        assert c.recall == pytest.approx(0.972, abs=1e-12)
        assert c.precision == pytest.approx(0.955, abs=1e-3)
        assert c.precision == pytest.approx(486 / 509, abs=1e-12)
        p, r = c.precision, c.recall
        assert c.f1 == pytest.approx(2 * p * r / (p + r), abs=1e-12)
        assert c.accuracy == pytest.approx((486 + 9557) / 10080, abs=1e-12)

    def test_zero_division_guards(self):
        c = Confusion(tp=0, fp=0, fn=0, tn=0)
        assert (c.precision, c.recall, c.f1, c.accuracy) == (0.0, 0.0, 0.0, 0.0)


class TestEvaluateDetector:
    def _flags(self, n: int, spans: list[tuple[int, int]]) -> list[bool]:
        flags = [False] * n
        for lo, hi in spans:
            for m in range(lo, hi):
                flags[m] = True
        return flags

    def test_perfect_detector(self):
        flags = self._flags(30, [(10, 15)])
        report = evaluate_detector(
            lambda m: flags[m], flags, [_event(10, 5)], START_NS
        )
        c = report.confusion
        assert (c.tp, c.fp, c.fn, c.tn) == (5, 0, 0, 25)
        assert c.f1 == 1.0
        assert report.detection_latency_minutes == (0.0,)
        assert report.undetected_episodes == 0

    def test_two_minute_latency(self):
        flags = self._flags(30, [(10, 15)])
        fired = {12, 13, 14}
        report = evaluate_detector(
            lambda m: m in fired, flags, [_event(10, 5)], START_NS
        )
        assert report.detection_latency_minutes == (2.0,)
        assert report.confusion.tp == 3
        assert report.confusion.fn == 2

    def test_missed_episode_counts_as_undetected(self):
        flags = self._flags(40, [(10, 15), (25, 28)])
        fired = {11}
        report = evaluate_detector(
            lambda m: m in fired,
            flags,
            [_event(10, 5, "ep-1"), _event(25, 3, "ep-2")],
            START_NS,
        )
        assert report.detection_latency_minutes == (1.0,)
        assert report.undetected_episodes == 1

    def test_false_positive_outside_episode(self):
        flags = self._flags(30, [(10, 15)])
        fired = set(range(10, 15)) | {20}
        report = evaluate_detector(lambda m: m in fired, flags, [_event(10, 5)], START_NS)
        assert report.confusion.fp == 1
        assert report.confusion.tn == 24

    def test_requires_at_least_one_episode(self):
        with pytest.raises(ValueError, match="episode"):
            evaluate_detector(lambda m: False, [False] * 10, [], START_NS)


def _window(y_hours: float, minute: int) -> LabeledWindow:
    return LabeledWindow(
        features=np.zeros((60, 4)),
        time_to_leak=y_hours,
        is_leaking=y_hours == 0.0,
        end_timestamp=START_NS + minute * NS_PER_MINUTE,
        rack_id="rack-01",
    )


class _StubModel:
    """Replays a fixed prediction vector regardless of the inputs."""

    def __init__(self, predictions):
        self._pred = np.asarray(predictions, dtype=np.float64)

    def predict_batch(self, x):
        assert x.shape[0] == self._pred.size
        return self._pred.copy()


class TestEvaluateForecaster:
    def test_zero_error_model_scores_perfectly(self):
        ys = [0.5, 1.0, 3.0, 5.0, 8.0, 8.0]
        windows = [_window(y, i) for i, y in enumerate(ys)]
        cal = Calibration(signed_errors=(0.0,) * 60, eps90=0.0)
        report = evaluate_forecaster(_StubModel(ys), cal, windows)
        assert report.calibration_coverage == 1.0
        by_level = {t.probability_level: t for t in report.tolerance_accuracy}
        assert by_level[0.90].accuracy == 1.0
        assert by_level[0.90].n == 2  # y <= 2h
        assert by_level[0.80].accuracy == 1.0
        assert by_level[0.80].n == 3  # y <= 4h

    def test_partial_accuracy_arithmetic(self):
        # Errors of 0, 24, 36, and 60 minutes against 1-hour labels.
        ys = [1.0, 1.0, 1.0, 1.0]
        preds = [1.0, 1.4, 1.6, 2.0]
        windows = [_window(y, i) for i, y in enumerate(ys)]
        # A wide left tail makes every forecast qualify at both levels.
        cal = Calibration(signed_errors=(-10.0,) * 60, eps90=0.5)
        report = evaluate_forecaster(_StubModel(preds), cal, windows)
        by_level = {t.probability_level: t for t in report.tolerance_accuracy}
        assert by_level[0.90].accuracy == pytest.approx(0.5)  # |err| <= 30 min
        assert by_level[0.80].accuracy == pytest.approx(0.75)  # |err| <= 45 min
        assert report.calibration_coverage == pytest.approx(0.5)

    def test_no_qualifying_windows_reports_empty_slice(self):
        ys = [1.0, 5.0]
        windows = [_window(y, i) for i, y in enumerate(ys)]
        # All mass at +10h: nothing reaches an 80% probability of onset.
        cal = Calibration(signed_errors=(10.0,) * 60, eps90=0.1)
        report = evaluate_forecaster(_StubModel(ys), cal, windows)
        for entry in report.tolerance_accuracy:
            assert entry.n == 0
            assert entry.accuracy == 0.0

    def test_all_censored_span_rejected(self):
        windows = [_window(8.0, i) for i in range(5)]
        cal = Calibration(signed_errors=(0.0,) * 60, eps90=0.0)
        with pytest.raises(ValueError, match="no upcoming leak"):
            evaluate_forecaster(_StubModel([8.0] * 5), cal, windows)


class TestIntegratedCoverage:
    ONSET = START_NS + 600 * NS_PER_MINUTE

    def _ev(self):
        return _event(600, 90)

    def test_forecast_path_catches_event(self):
        alerts = [(self.ONSET - 3 * NS_PER_HOUR, 0.9)]
        report = integrated_coverage(alerts, [], [self._ev()])
        assert report.integrated_coverage == 1.0
        assert report.attribution == {"forecast": 1.0, "detector": 0.0}

    def test_detector_path_catches_event(self):
        dets = [_detection(self.ONSET + 2 * NS_PER_MINUTE)]
        report = integrated_coverage([], dets, [self._ev()])
        assert report.integrated_coverage == 1.0
        assert report.attribution == {"forecast": 0.0, "detector": 1.0}

    def test_subthreshold_probability_does_not_count(self):
        alerts = [(self.ONSET - 3 * NS_PER_HOUR, 0.79)]
        report = integrated_coverage(alerts, [], [self._ev()])
        assert report.integrated_coverage == 0.0

    def test_late_forecast_falls_back_to_detector(self):
        alerts = [(self.ONSET - 1 * NS_PER_HOUR, 0.95)]
        dets = [_detection(self.ONSET + NS_PER_MINUTE)]
        report = integrated_coverage(alerts, dets, [self._ev()])
        assert report.integrated_coverage == 1.0
        assert report.attribution["detector"] == 1.0

    def test_stale_forecast_is_forgotten(self):
        # More than the censoring horizon before onset: a different episode.
        alerts = [(self.ONSET - 9 * NS_PER_HOUR, 0.95)]
        report = integrated_coverage(alerts, [], [self._ev()])
        assert report.integrated_coverage == 0.0

    def test_lead_time_boundary_inclusive(self):
        alerts = [(self.ONSET - 2 * NS_PER_HOUR, 0.8)]
        report = integrated_coverage(alerts, [], [self._ev()])
        assert report.attribution["forecast"] == 1.0

    def test_detection_window_boundary(self):
        inside = [_detection(self.ONSET + 3 * NS_PER_MINUTE)]
        outside = [_detection(self.ONSET + 3 * NS_PER_MINUTE + 1)]
        assert integrated_coverage([], inside, [self._ev()]).integrated_coverage == 1.0
        assert integrated_coverage([], outside, [self._ev()]).integrated_coverage == 0.0

    def test_both_paths_attributes_to_forecast(self):
        alerts = [(self.ONSET - 3 * NS_PER_HOUR, 0.9)]
        dets = [_detection(self.ONSET + NS_PER_MINUTE)]
        report = integrated_coverage(alerts, dets, [self._ev()])
        assert report.attribution == {"forecast": 1.0, "detector": 0.0}

    def test_negative_detection_ignored(self):
        dets = [_detection(self.ONSET + NS_PER_MINUTE, is_leak=False)]
        report = integrated_coverage([], dets, [self._ev()])
        assert report.integrated_coverage == 0.0

    def test_no_events_gives_zero(self):
        report = integrated_coverage([], [], [])
        assert report.integrated_coverage == 0.0
        assert report.attribution == {"forecast": 0.0, "detector": 0.0}

    def test_mixed_fleet_arithmetic(self):
        events = [_event(600, 90, "ep-1"), _event(1800, 90, "ep-2"),
                  _event(3000, 90, "ep-3")]
        alerts = [(events[0].onset - 3 * NS_PER_HOUR, 0.9)]
        dets = [_detection(events[1].onset + NS_PER_MINUTE)]
        report = integrated_coverage(alerts, dets, events)
        assert report.integrated_coverage == pytest.approx(2 / 3)
        assert report.attribution["forecast"] == pytest.approx(1 / 3)
        assert report.attribution["detector"] == pytest.approx(1 / 3)

    @given(
        onsets=st.lists(
            st.integers(min_value=600, max_value=10_000), min_size=1, max_size=4,
            unique=True,
        ),
        alert_offsets=st.lists(
            st.tuples(st.integers(min_value=-540, max_value=60),
                      st.floats(min_value=0.0, max_value=1.0)),
            max_size=4,
        ),
        det_offsets=st.lists(st.integers(min_value=-5, max_value=10), max_size=3),
        extra_event=st.integers(min_value=0, max_value=2),
        extra_offset=st.integers(min_value=-5, max_value=10),
    )
    @settings(max_examples=200, deadline=None)
    def test_adding_a_detection_never_lowers_coverage(
        self, onsets, alert_offsets, det_offsets, extra_event, extra_offset
    ):
        events = [_event(m, 60, f"ep-{i}") for i, m in enumerate(sorted(onsets))]
        alerts = [
            (events[0].onset + off * NS_PER_MINUTE, prob)
            for off, prob in alert_offsets
        ]
        dets = [
            _detection(events[i % len(events)].onset + off * NS_PER_MINUTE)
            for i, off in enumerate(det_offsets)
        ]
        before = integrated_coverage(alerts, dets, events).integrated_coverage
        anchor = events[extra_event % len(events)]
        added = dets + [_detection(anchor.onset + extra_offset * NS_PER_MINUTE)]
        after = integrated_coverage(alerts, added, events).integrated_coverage
        assert after >= before


class TestEnergySavings:
    def test_reference_fleet_fixture(self):
        value = energy_savings(47, 5.32, 600, 0.984)
        assert value == pytest.approx(1476.23616, abs=1e-6)
        assert 1400 <= value <= 1550

    def test_round_number_fixture(self):
        assert energy_savings(100, 4, 600, 1.0) == 2400.0

    def test_zero_coverage_saves_nothing(self):
        assert energy_savings(47, 5.32, 600, 0.0) == 0.0

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            energy_savings(-1, 5.32, 600, 0.9)

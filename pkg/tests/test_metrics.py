import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowtrace.errors import InsufficientDataError
from flowtrace.metrics import (
    METRIC_NAMES,
    DegenerateVarianceWarning,
    MetricsVector,
    probe_metrics,
    resample_trace,
    trial_metrics,
    zstandardize,
)
from flowtrace.task import ForceTrace, TrialConfig, evaluate_trial

from conftest import make_trace


def record_for(samples, config, dt=0.001):
    return evaluate_trial(ForceTrace(dt, np.asarray(samples, dtype=float)), config)


class TestTrialMetrics:
    def test_step_trace_timing(self, step_trace, step_config):
        m = trial_metrics(evaluate_trial(step_trace, step_config))
        assert m.reaction_time == pytest.approx(0.2)
        assert m.arriving_time == pytest.approx(0.0)
        assert m.completing_time == pytest.approx(0.7)
        assert m.in_range_time == pytest.approx(0.6)

    def test_overshoot_formula(self):
        config = TrialConfig(band_width=0.5, trial_duration=0.003, hold_duration=0.002)
        rec = record_for([0.0, 1.0, 1.2], config)  # zero start, peak 1.2
        m = trial_metrics(rec)
        assert m.force_overshoot == pytest.approx(0.2, abs=1e-9)

    def test_deviation_and_adjust_rate_formulas(self):
        # samples [1.0, 1.1, 0.9] from onset
        config = TrialConfig(band_width=0.5, trial_duration=0.004, hold_duration=0.002)
        rec = record_for([0.0, 1.0, 1.1, 0.9], config)
        m = trial_metrics(rec)
        assert m.average_deviation == pytest.approx((0.0 + 0.1 + 0.1) / 3, abs=1e-9)
        assert m.average_adjust_rate == pytest.approx((0.1 + 0.2) / (2 * 0.001), abs=1e-6)

    def test_censoring_no_press(self):
        config = TrialConfig(band_width=0.04)
        m = trial_metrics(record_for(np.zeros(3000), config))
        assert m.reaction_time == pytest.approx(3.0)
        assert m.arriving_time == pytest.approx(3.0)
        assert m.completing_time == pytest.approx(3.0)
        assert m.success_rate == 0.0

    def test_censoring_failed_trial(self, step_config):
        trace = make_trace([(0.2, 0.0), (0.3, 1.0), (2.5, 0.0)])
        m = trial_metrics(evaluate_trial(trace, step_config))
        assert m.completing_time == pytest.approx(3.0)
        assert m.in_range_time == pytest.approx(0.3)

    def test_success_rate_over_window(self, step_trace, step_config):
        good = evaluate_trial(step_trace, step_config)
        bad = evaluate_trial(make_trace([(3.0, 0.0)]), step_config)
        m = trial_metrics(good, [good, bad, good, good, bad])
        assert m.success_rate == pytest.approx(0.6)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=2.0), min_size=3, max_size=200),
           st.floats(min_value=0.5, max_value=3.0))
    def test_reversal_and_scaling_properties(self, forces, scale):
        config = TrialConfig(band_width=0.3, trial_duration=0.25, hold_duration=0.05)
        base = np.asarray([0.0] + forces)[:250]
        rec = evaluate_trial(ForceTrace(0.001, base), config)
        m = trial_metrics(rec)
        if rec.press_onset is None:
            return
        onset = int(round(rec.press_onset / 0.001))
        span = base[onset:]
        # time reversal of the span leaves deviation and adjust rate unchanged
        dev_rev = np.mean(np.abs(span[::-1] - 1.0))
        assert m.average_deviation == pytest.approx(dev_rev, abs=1e-12)
        if span.size >= 2:
            adr_rev = np.sum(np.abs(np.diff(span[::-1]))) / ((span.size - 1) * 0.001)
            assert m.average_adjust_rate == pytest.approx(adr_rev, rel=1e-12)
        # scaling forces by c scales the deviation-from-scaled-target by c
        scaled = ForceTrace(0.001, base * scale)
        cfg_scaled = TrialConfig(band_width=0.3 * scale, trial_duration=0.25, hold_duration=0.05,
                                 target_force=scale, press_threshold=0.01 * scale)
        m2 = trial_metrics(evaluate_trial(scaled, cfg_scaled))
        assert m2.average_deviation == pytest.approx(m.average_deviation * scale, rel=1e-9)
        assert m2.average_adjust_rate == pytest.approx(m.average_adjust_rate * scale, rel=1e-9)

    def test_in_range_counts_all_samples(self, step_config):
        # two short in-band visits, both below the hold duration
        trace = make_trace([(0.2, 0.0), (0.2, 1.0), (0.2, 0.0), (0.3, 1.0), (2.1, 0.0)])
        m = trial_metrics(evaluate_trial(trace, step_config))
        assert m.in_range_time == pytest.approx(0.5)


class TestProbeMetrics:
    def build(self, reactions, step_config):
        records = []
        for r in reactions:
            trace = make_trace([(r, 0.0), (0.6, 1.0), (3.0 - r - 0.6, 0.0)])
            records.append(evaluate_trial(trace, step_config))
        return records

    def test_mean_of_reaction_times(self, step_config):
        reactions = [0.2, 0.3, 0.25, 0.2, 0.3]
        records = self.build(reactions, step_config)
        m = probe_metrics(records, 5, window=5)
        assert m.reaction_time == pytest.approx(np.mean(reactions))

    def test_success_rate_fraction(self, step_config):
        records = self.build([0.2] * 5, step_config)
        bad = evaluate_trial(make_trace([(3.0, 0.0)]), step_config)
        mixed = [records[0], bad, records[1], records[2], bad]
        m = probe_metrics(mixed, 5, window=5)
        assert m.success_rate == pytest.approx(0.6)

    def test_identical_trials_idempotent(self, step_trace, step_config):
        rec = evaluate_trial(step_trace, step_config)
        m_one = trial_metrics(rec)
        m_five = probe_metrics([rec] * 5, 5, window=5)
        assert np.allclose(m_one.as_array(), m_five.as_array())

    def test_exact_mean_oracle(self, step_config):
        reactions = [0.15, 0.3, 0.22, 0.19, 0.28]
        records = self.build(reactions, step_config)
        m = probe_metrics(records, 5, window=5)
        oracle = np.mean([trial_metrics(r).as_array() for r in records], axis=0)
        assert np.allclose(m.as_array(), oracle, atol=1e-12)

    def test_too_few_preceding_trials(self, step_trace, step_config):
        rec = evaluate_trial(step_trace, step_config)
        with pytest.raises(InsufficientDataError):
            probe_metrics([rec] * 4, 4, window=5)


class TestZStandardize:
    def vec(self, value):
        return MetricsVector(*([value] * len(METRIC_NAMES)))

    def test_symmetric_triple(self):
        z, std = zstandardize([self.vec(1.0), self.vec(2.0), self.vec(3.0)])
        assert [v.reaction_time for v in z] == pytest.approx([-1.0, 0.0, 1.0])
        assert std.sd[0] == pytest.approx(1.0)

    def test_constant_metric_warns_and_zeros(self):
        with pytest.warns(DegenerateVarianceWarning):
            z, std = zstandardize([self.vec(2.0), self.vec(2.0), self.vec(2.0)])
        assert all(v.reaction_time == 0.0 for v in z)
        assert std.degenerate == METRIC_NAMES

    def test_idempotent_on_standardized(self):
        z1, _ = zstandardize([self.vec(1.0), self.vec(2.0), self.vec(3.0)])
        z2, _ = zstandardize(z1)
        assert np.allclose(
            np.stack([v.as_array() for v in z1]),
            np.stack([v.as_array() for v in z2]),
        )


class TestResample:
    def test_identity_on_grid(self):
        times = np.arange(100) * 0.001
        forces = np.sin(times * 10) ** 2
        trace = resample_trace(times, forces, 0.1, rate=1000.0)
        assert np.allclose(trace.samples, forces, atol=1e-12)

    def test_downsamples_fast_input(self):
        times = np.arange(1000) * 0.0001  # 10 kHz for 0.1 s
        forces = np.linspace(0, 1, 1000)
        trace = resample_trace(times, forces, 0.1, rate=1000.0)
        assert trace.samples.size == 100
        assert np.all(np.diff(trace.samples) >= 0)

    def test_interpolates_slow_input(self):
        times = np.array([0.0, 0.05, 0.1])
        forces = np.array([0.0, 1.0, 0.0])
        trace = resample_trace(times, forces, 0.1, rate=1000.0)
        assert trace.samples[50] == pytest.approx(1.0, abs=0.03)

"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Replicate counts default to CI scale; set
ACCEPTANCE_REPLICATES=1000 for the full-scale run.
"""

import os
import time

import numpy as np
import pytest

from flowtrace.decode import decode_timeseries, nrmse, select_subset
from flowtrace.metrics import METRIC_NAMES, probe_metrics, trial_metrics
from flowtrace.pipeline import cohort_report, session_from_subject
from flowtrace.simulate import SimParams, gen_flow_process, simulate_subject, simulate_trial
from flowtrace.stats import paired_t, power_timescale, random_test, welch_psd
from flowtrace.task import (
    ForceTrace,
    StaircaseState,
    TrialConfig,
    evaluate_trial,
    measured_skill,
    schedule_probes,
)
from flowtrace.dataio import ProtocolConfig

from test_decode import continuous_probes, metrics_from

REPLICATES = int(os.environ.get("ACCEPTANCE_REPLICATES", "100"))

# in-flow minus out-flow signs expected for the six per-trial metrics
DIRECTIONS = {
    "arriving_time": -1,
    "completing_time": -1,
    "in_range_time": +1,
    "force_overshoot": -1,
    "average_deviation": -1,
    "average_adjust_rate": -1,
}


def report_line(number, name, passed, detail):
    print(f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'} [{name}]: {detail}")
    assert passed, f"criterion {number} ({name}): {detail}"


def simulate_cohort(n_subjects, flow_components, noise_sd, base_seed, report_noise_sd=0.5):
    """Shared cohort builder: full protocol per subject, in memory."""
    config = TrialConfig()
    protocol = ProtocolConfig()
    sessions = []
    for i in range(n_subjects):
        schedule = schedule_probes(3, 100, 4, 12, seed=base_seed + 1000 + i)
        flow = gen_flow_process(
            "sinusoid-mixture", 300, seed=base_seed + 2000 + i, mean=4.0,
            components=flow_components, noise_sd=noise_sd,
        )
        subject = simulate_subject(SimParams(), config, schedule, flow,
                                   report_noise_sd=report_noise_sd, seed=base_seed + i)
        sessions.append(session_from_subject(
            subject, f"acc{i:03d}", protocol, {"seed": base_seed + i}))
    return sessions


@pytest.fixture(scope="module")
def decode_cohort():
    """Criterion 4 cohort: 24 subjects, mixed slow + 20 s flow."""
    return simulate_cohort(24, ((1.3, 90.0), (1.0, 20.0)), 0.3, base_seed=500)


class TestAcceptance:
    def test_1_formula_exactness(self):
        start = time.perf_counter()
        config = TrialConfig(band_width=0.5, trial_duration=0.004, hold_duration=0.002)
        # overshoot: peak 1.2 over target 1 -> 0.2
        rec = evaluate_trial(ForceTrace(0.001, np.array([0.0, 1.0, 1.2, 1.0])), config)
        m = trial_metrics(rec)
        ok = abs(m.force_overshoot - 0.2) < 1e-9
        # deviation and adjust rate on [1.0, 1.1, 0.9] from onset
        rec2 = evaluate_trial(ForceTrace(0.001, np.array([0.0, 1.0, 1.1, 0.9])), config)
        m2 = trial_metrics(rec2)
        ok &= abs(m2.average_deviation - (0.0 + 0.1 + 0.1) / 3) < 1e-9
        ok &= abs(m2.average_adjust_rate - (0.1 + 0.2) / (2 * 0.001)) < 1e-6
        # normalized error: true [3,4] vs predicted [4,3]
        ok &= abs(nrmse(np.array([3.0, 4.0]), np.array([4.0, 3.0])) - np.sqrt(2 / 25)) < 1e-12
        elapsed = time.perf_counter() - start
        ok &= elapsed < 1.0
        report_line(1, "formula exactness",
                    ok, f"fixtures match to 1e-9, runtime {elapsed:.3f}s")

    def test_2_staircase_convergence(self):
        start = time.perf_counter()
        skill, width = 0.040, 0.005
        estimates, post = [], []
        for seed in range(200):
            rng = np.random.default_rng(seed)
            stair = StaircaseState(current_band=0.2, k1=0.5, k2=0.05)
            for _ in range(50):
                p = 1.0 / (1.0 + np.exp(-(stair.current_band - skill) / width))
                success = bool(rng.random() < p)
                if len(stair.transition_points) >= 10:
                    post.append(success)
                stair.step(success, float(rng.uniform(0.7, 1.3)) if success else 3.0)
            estimates.append(measured_skill(stair))
        estimates = np.array(estimates)
        frac_within = float(np.mean(np.abs(estimates - skill) <= 0.15 * skill))
        post_rate = float(np.mean(post))
        elapsed = time.perf_counter() - start
        ok = frac_within >= 0.90 and 0.4 <= post_rate <= 0.6 and elapsed < 10
        report_line(2, "staircase convergence", ok,
                    f"{frac_within:.0%} of 200 seeds within ±15%, "
                    f"post-convergence success {post_rate:.3f}, runtime {elapsed:.1f}s")

    def test_3_simulation_replication(self):
        start = time.perf_counter()
        config = TrialConfig(band_width=0.055)
        params = SimParams()
        rows_in, rows_out, succ_in, succ_out = [], [], [], []
        for i in range(100):
            t_in = simulate_trial(params, params.inflow_anchor, config,
                                  np.random.default_rng([12345, i]))
            t_out = simulate_trial(params, params.outflow_anchor, config,
                                   np.random.default_rng([12345, i]))
            r_in, r_out = evaluate_trial(t_in, config), evaluate_trial(t_out, config)
            succ_in.append(r_in.success)
            succ_out.append(r_out.success)
            rows_in.append(trial_metrics(r_in).as_array())
            rows_out.append(trial_metrics(r_out).as_array())
        s_in, s_out = float(np.mean(succ_in)), float(np.mean(succ_out))
        mi, mo = np.stack(rows_in), np.stack(rows_out)
        failures = []
        for name, want in DIRECTIONS.items():
            j = METRIC_NAMES.index(name)
            res = paired_t(mi[:, j], mo[:, j])
            if np.sign(res.statistic) != want or res.p_value >= 0.05:
                failures.append(f"{name} (t={res.statistic:+.2f}, p={res.p_value:.3f})")
        elapsed = time.perf_counter() - start
        ok = (abs(s_in - 0.61) <= 0.10 and abs(s_out - 0.47) <= 0.10
              and not failures and elapsed < 30)
        report_line(3, "simulation replication", ok,
                    f"success in/out {s_in:.2f}/{s_out:.2f} vs 0.61/0.47 ±0.10; "
                    f"directions {'all significant' if not failures else 'FAILED: ' + ', '.join(failures)}; "
                    f"runtime {elapsed:.1f}s")

    def test_4_decoder_recovery(self, decode_cohort):
        start = time.perf_counter()
        report = cohort_report(decode_cohort, replicates=REPLICATES, seed=11)
        cohort = report["cohort"]
        n_total = cohort["n_analyzed"] + cohort["n_excluded"]
        elapsed = time.perf_counter() - start
        budget = 600 if REPLICATES >= 1000 else 60
        ok = (n_total == 24
              and cohort["pooled_r"] >= 0.7
              and cohort["mean_nrmse"] <= 0.16
              and cohort["n_pass_random"] >= 20
              and cohort["n_pass_permutation"] >= 20
              and elapsed < budget)
        report_line(4, "decoder recovery", ok,
                    f"pooled r={cohort['pooled_r']:.3f} (>=0.7), "
                    f"mean NRMSE={cohort['mean_nrmse']:.3f} (<=0.16), "
                    f"pass random {cohort['n_pass_random']}/24, "
                    f"permutation {cohort['n_pass_permutation']}/24 (>=20), "
                    f"replicates={REPLICATES}, runtime {elapsed:.0f}s")

    def test_5_significance_calibration(self):
        start = time.perf_counter()
        n_subjects = 200
        hits = 0
        for i in range(n_subjects):
            rng = np.random.default_rng([42, i])
            raw = rng.normal(size=(12, len(METRIC_NAMES)))
            labels = rng.uniform(1.0, 7.0, size=12)
            res = random_test(continuous_probes(labels), metrics_from(raw),
                              n=REPLICATES, seed=i)
            hits += res.p_value < 0.05
        fraction = hits / n_subjects
        elapsed = time.perf_counter() - start
        ok = abs(fraction - 0.05) <= 0.03 and elapsed < 300
        report_line(5, "significance-test calibration", ok,
                    f"fraction p<0.05 = {fraction:.3f} (0.05±0.03) over "
                    f"{n_subjects} null subjects, runtime {elapsed:.0f}s")

    def test_6_psd_timescale(self):
        start = time.perf_counter()
        # pure-sinusoid fixture first: 20 s tone at the trial cadence
        fs = 1.0 / 3.0
        tone = np.sin(2 * np.pi * np.arange(300) / fs / 20.0)
        psd = welch_psd(tone, fs=fs, segment_length=120)
        fixture_ts = power_timescale(psd, 0.7)
        fixture_ok = abs(1.0 / fixture_ts - 0.05) <= psd.df + 1e-12

        cohort = simulate_cohort(16, ((2.2, 20.0),), 0.2, base_seed=900,
                                 report_noise_sd=0.2)
        timescales = []
        for session in cohort:
            probes = session.probes
            metrics = [probe_metrics(session.sessions[p.session - 1], p.trial_index, 5)
                       for p in probes]
            try:
                sel = select_subset(probes, metrics, 4)
            except ArithmeticError:
                continue
            p_rand = random_test(probes, metrics, n=REPLICATES, seed=1).p_value
            if p_rand >= 0.05:
                continue
            _, series = decode_timeseries(sel.model, session.all_trials, 5)
            timescales.append(
                power_timescale(welch_psd(series, fs, segment_length=120), 0.7))
        mean_ts = float(np.mean(timescales))
        elapsed = time.perf_counter() - start
        ok = fixture_ok and abs(mean_ts - 20.0) <= 5.0 and len(timescales) >= 8 and elapsed < 30
        report_line(6, "PSD timescale", ok,
                    f"fixture {fixture_ts:.1f}s (within one bin of 20s: {fixture_ok}), "
                    f"cohort mean {mean_ts:.1f}s over {len(timescales)} decodable "
                    f"subjects (20±5s), runtime {elapsed:.0f}s")

    def test_7_live_batch_equivalence(self, tmp_path):
        import json

        from fastapi.testclient import TestClient

        from flowtrace.cli import main as cli_main
        from flowtrace.service import create_app
        from test_service import SMALL, StreamDriver

        start = time.perf_counter()
        driver = StreamDriver(SMALL, seed=21)
        driver.run()

        app = create_app(data_dir=tmp_path / "data", replicates=30, seed=3)
        client = TestClient(app)
        overrides = {
            "subject_id": "accws", "seed": 21,
            "sessions": SMALL.sessions,
            "trials_per_session": SMALL.trials_per_session,
            "probes_per_session": SMALL.probes_per_session,
            "min_gap": SMALL.min_gap,
            "practice_trials": SMALL.practice_trials,
            "skill_trials": SMALL.skill_trials,
            "skill_transitions": SMALL.skill_transitions,
        }
        client.post("/api/session", json=overrides)
        with client.websocket_connect("/api/session/accws/stream") as ws:
            ws.receive_json()
            for message, events in zip(driver.messages, driver.events):
                ws.send_json(message)
                for _ in events:
                    ws.receive_json()
        live = client.get("/api/session/accws/report",
                          params={"replicates": 30, "seed": 3})
        assert live.status_code == 200

        batch_dir = tmp_path / "batch"
        batch_dir.mkdir()
        doc = json.loads((tmp_path / "data" / "accws.json").read_text())
        (batch_dir / "accws.json").write_text(json.dumps(doc))
        out = tmp_path / "batch_report.json"
        code = cli_main(["decode", "--input", str(batch_dir), "--out", str(out),
                         "--replicates", "30", "--seed", "3"])
        elapsed = time.perf_counter() - start
        identical = live.content == out.read_bytes()
        ok = code == 0 and identical and elapsed < 30
        report_line(7, "live/batch equivalence", ok,
                    f"service report bytes == CLI report bytes: {identical}, "
                    f"runtime {elapsed:.0f}s")

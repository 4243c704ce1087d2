"""Per-subject and cohort analysis shared by the CLI and the live service.

A subject's analysis: probe-window metrics, exhaustive subset selection
with leave-one-out cross-validation, prediction error and correlation,
label-randomization significance tests, relative metric contributions,
per-trial flow decoding, and its spectral timescale. The cohort report
adds pooled correlation, in-/out-flow metric splits with FDR correction,
and the timescale summary over subjects passing the random test.
"""

from __future__ import annotations

import hashlib
import warnings

import numpy as np

from . import __version__
from .dataio import SessionData
from .decode import decode_timeseries, relative_contributions, select_subset
from .errors import DegenerateDataError, DegenerateFitError, InsufficientDataError
from .metrics import METRIC_NAMES, probe_metrics
from .stats import (
    bh_fdr,
    median_split,
    paired_t,
    pearson,
    permutation_test,
    power_timescale,
    qc_subject,
    random_test,
    welch_psd,
)

# in-flow minus out-flow directions reproduced by the simulator and
# reported for the cohort split tests
FLOW_SERIES_FS = 1.0 / 3.0  # decoded-flow sampling rate: one trial period


def subject_seed(base_seed: int, subject_id: str, salt: int) -> list[int]:
    digest = hashlib.sha256(subject_id.encode()).digest()
    return [int(base_seed), int.from_bytes(digest[:8], "big"), int(salt)]


def session_from_subject(subject, subject_id: str, config, provenance: dict) -> SessionData:
    """Package a simulated subject as persistable session data."""
    from .dataio import StaircaseRecord
    from .decode import FlowProbe

    probes = [
        FlowProbe(probe_index=k, trial_index=p.trial_index, responses=p.responses, session=p.session)
        for k, p in enumerate(subject.probes, start=1)
    ]
    return SessionData(
        subject_id=subject_id,
        config=config,
        staircase=StaircaseRecord.from_state(subject.staircase, subject.skill),
        sessions=subject.sessions,
        probes=probes,
        flow_truth=subject.flow_truth,
        provenance=provenance,
    )


def probe_features(session: SessionData, window: int | None = None):
    """Matched (probes, metrics-vectors) for a session's probes."""
    window = window or session.config.probe_window
    metrics = [
        probe_metrics(session.sessions[p.session - 1], p.trial_index, window)
        for p in session.probes
    ]
    return list(session.probes), metrics


def analyze_subject(
    session: SessionData,
    replicates: int = 1000,
    seed: int = 0,
    max_size: int = 4,
    window: int | None = None,
    reselect: bool = True,
    psd_segment: int | None = None,
) -> dict:
    """Full per-subject analysis as a JSON-ready dict."""
    window = window or session.config.probe_window
    trials = session.all_trials
    successes = np.array([t.success for t in trials], dtype=float)
    probes, metrics = probe_features(session, window)
    reported = np.array([p.intensity for p in probes])

    if not trials or not probes:
        return {
            "subject_id": session.subject_id,
            "n_trials": len(trials),
            "n_probes": len(probes),
            "success_rate": float(successes.mean()) if trials else 0.0,
            "qc": {"passed": False, "reasons": ["no trials or probes recorded"]},
            "decode_error": "no trials or probes recorded",
        }

    qc = qc_subject(successes, reported)
    out: dict = {
        "subject_id": session.subject_id,
        "n_trials": len(trials),
        "n_probes": len(probes),
        "success_rate": float(successes.mean()),
        "qc": {"passed": qc.passed, "reasons": list(qc.reasons)},
    }

    try:
        selection = select_subset(probes, metrics, max_size)
    except (DegenerateFitError, InsufficientDataError, ZeroDivisionError) as exc:
        out["decode_error"] = str(exc)
        return out

    fixed = None if reselect else selection.subset
    predictions = selection.loocv.predictions
    out["selected_subset"] = list(selection.subset)
    out["loocv_nrmse"] = selection.loocv.nrmse
    out["weights"] = {n: float(w) for n, w in zip(selection.subset, selection.model.weights)}
    out["intercept"] = selection.model.intercept
    out["contributions"] = relative_contributions(selection.model)
    out["probes"] = [
        {
            "probe_index": p.probe_index,
            "session": p.session,
            "trial_index": p.trial_index,
            "reported": p.intensity,
            "predicted": float(pred),
        }
        for p, pred in zip(probes, predictions)
    ]

    try:
        corr = pearson(reported, predictions)
        out["pearson_r"] = corr.effect_size
        out["pearson_p"] = corr.p_value
    except DegenerateDataError as exc:
        out["pearson_error"] = str(exc)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rnd = random_test(
            probes, metrics, n=replicates,
            seed=subject_seed(seed, session.subject_id, 1),
            max_size=max_size, fixed_subset=fixed,
        )
        prm = permutation_test(
            probes, metrics, n=replicates,
            seed=subject_seed(seed, session.subject_id, 2),
            max_size=max_size, fixed_subset=fixed,
        )
    out["random_test"] = {
        "p_value": rnd.p_value,
        "mean_null_nrmse": float(rnd.replicate_nrmse.mean()),
        "n_dropped": rnd.n_dropped,
        "degenerate": rnd.degenerate,
    }
    out["permutation_test"] = {
        "p_value": prm.p_value,
        "mean_null_nrmse": float(prm.replicate_nrmse.mean()),
        "n_dropped": prm.n_dropped,
        "degenerate": prm.degenerate,
    }

    try:
        _, series = decode_timeseries(selection.model, trials, window)
        psd = welch_psd(series, FLOW_SERIES_FS, segment_length=psd_segment)
        out["flow_timescale_s"] = power_timescale(psd, 0.7)
    except (DegenerateDataError, InsufficientDataError) as exc:
        out["flow_timescale_s"] = None
        out["timescale_error"] = str(exc)
    return out


def _flow_split_tests(subject_rows: list[dict], sessions: list[SessionData]) -> dict:
    """Per-metric paired test of in-flow vs out-flow probe windows across
    subjects, BH-corrected."""
    by_id = {s.subject_id: s for s in sessions}
    means_in, means_out = [], []
    for row in subject_rows:
        if "selected_subset" not in row:
            continue
        session = by_id[row["subject_id"]]
        probes, metrics = probe_features(session)
        reported = np.array([p.intensity for p in probes])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            in_flow = median_split(reported)
        if not in_flow.any() or in_flow.all():
            continue
        mat = np.stack([m.as_array() for m in metrics])
        means_in.append(mat[in_flow].mean(axis=0))
        means_out.append(mat[~in_flow].mean(axis=0))
    if len(means_in) < 2:
        return {"n_subjects": len(means_in), "metrics": {}}
    a = np.stack(means_in)
    b = np.stack(means_out)
    stats = {}
    raw_p = []
    for j, name in enumerate(METRIC_NAMES):
        try:
            res = paired_t(a[:, j], b[:, j])
            stats[name] = {"t": res.statistic, "p": res.p_value, "cohens_d": res.effect_size}
            raw_p.append(res.p_value)
        except DegenerateDataError:
            stats[name] = {"t": None, "p": None, "cohens_d": None}
            raw_p.append(1.0)
    adjusted = bh_fdr(np.array(raw_p))
    for name, adj in zip(METRIC_NAMES, adjusted):
        stats[name]["p_fdr"] = float(adj)
    return {"n_subjects": len(means_in), "metrics": stats}


def cohort_report(
    sessions: list[SessionData],
    replicates: int = 1000,
    seed: int = 0,
    max_size: int = 4,
    window: int | None = None,
    reselect: bool = True,
    qc: bool = True,
    psd_segment: int | None = None,
) -> dict:
    """Analyze a cohort and assemble the full report dict."""
    subject_rows = []
    excluded = []
    for session in sorted(sessions, key=lambda s: s.subject_id):
        row = analyze_subject(
            session, replicates=replicates, seed=seed, max_size=max_size,
            window=window, reselect=reselect, psd_segment=psd_segment,
        )
        if qc and not row["qc"]["passed"]:
            excluded.append({"subject_id": row["subject_id"], "reasons": row["qc"]["reasons"]})
            continue
        subject_rows.append(row)

    analyzed = [r for r in subject_rows if "selected_subset" in r]
    pooled_reported = np.concatenate(
        [[p["reported"] for p in r["probes"]] for r in analyzed]
    ) if analyzed else np.array([])
    pooled_predicted = np.concatenate(
        [[p["predicted"] for p in r["probes"]] for r in analyzed]
    ) if analyzed else np.array([])

    cohort: dict = {
        "n_subjects": len(subject_rows),
        "n_excluded": len(excluded),
        "n_analyzed": len(analyzed),
    }
    if analyzed:
        p_rand = np.array([r["random_test"]["p_value"] for r in analyzed])
        p_perm = np.array([r["permutation_test"]["p_value"] for r in analyzed])
        cohort["mean_nrmse"] = float(np.mean([r["loocv_nrmse"] for r in analyzed]))
        cohort["n_pass_random"] = int(np.sum(p_rand < 0.05))
        cohort["n_pass_permutation"] = int(np.sum(p_perm < 0.05))
        cohort["p_random_fdr"] = [float(v) for v in bh_fdr(p_rand)]
        cohort["p_permutation_fdr"] = [float(v) for v in bh_fdr(p_perm)]
        if pooled_reported.size >= 3 and np.std(pooled_reported) > 0:
            pooled = pearson(pooled_reported, pooled_predicted)
            cohort["pooled_r"] = pooled.effect_size
            cohort["pooled_p"] = pooled.p_value
        timescales = [
            r["flow_timescale_s"]
            for r in analyzed
            if r["flow_timescale_s"] is not None and r["random_test"]["p_value"] < 0.05
        ]
        cohort["timescale"] = {
            "n_subjects": len(timescales),
            "mean_s": float(np.mean(timescales)) if timescales else None,
            "sd_s": float(np.std(timescales)) if timescales else None,
        }

    by_id = {s.subject_id: s for s in sessions}
    flow_split = _flow_split_tests(analyzed, [by_id[r["subject_id"]] for r in analyzed])

    return {
        "tool_version": __version__,
        "parameters": {
            "replicates": replicates,
            "seed": seed,
            "max_subset_size": max_size,
            "probe_window": window,
            "reselect_null_subsets": reselect,
            "qc": qc,
        },
        "subjects": subject_rows,
        "excluded": excluded,
        "cohort": cohort,
        "flow_split": flow_split,
    }

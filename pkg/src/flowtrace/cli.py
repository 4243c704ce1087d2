"""Batch command line: simulate cohorts, decode sessions, summarize flow
timescales, and serve the live task."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import ProtocolConfig, read_session, write_report, write_session
from .errors import FormatError, InvalidInputError
from .pipeline import (
    FLOW_SERIES_FS,
    analyze_subject,
    cohort_report,
    session_from_subject,
)
from .simulate import SimParams, gen_flow_process, simulate_subject
from .stats import welch_psd
from .task import TrialConfig, schedule_probes

log = logging.getLogger("flowtrace")


def _setup_logging():
    level = os.environ.get("FLOWTRACE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _protocol_from_args(args) -> ProtocolConfig:
    trial = TrialConfig(
        target_force=args.target_force,
        band_width=args.initial_band,
        trial_duration=args.trial_duration,
        hold_duration=args.hold_duration,
        rest_duration=args.rest_duration,
        press_threshold=args.press_threshold,
    )
    return ProtocolConfig(
        trial=trial,
        sessions=args.sessions,
        trials_per_session=args.trials_per_session,
        probes_per_session=args.probes_per_session,
        min_gap=args.min_gap,
        practice_trials=args.practice_trials,
        skill_trials=args.skill_trials,
        k1=args.k1,
        k2=args.k2,
        initial_band=args.initial_band,
        probe_window=args.probe_window,
    )


def _add_protocol_flags(p: argparse.ArgumentParser):
    p.add_argument("--sessions", type=int, default=3)
    p.add_argument("--trials-per-session", type=int, default=100)
    p.add_argument("--probes-per-session", type=int, default=4)
    p.add_argument("--min-gap", type=int, default=12)
    p.add_argument("--practice-trials", type=int, default=2)
    p.add_argument("--skill-trials", type=int, default=50)
    p.add_argument("--k1", type=float, default=0.5)
    p.add_argument("--k2", type=float, default=0.05)
    p.add_argument("--initial-band", type=float, default=0.2)
    p.add_argument("--probe-window", type=int, default=5)
    p.add_argument("--target-force", type=float, default=1.0)
    p.add_argument("--trial-duration", type=float, default=3.0)
    p.add_argument("--hold-duration", type=float, default=0.5)
    p.add_argument("--rest-duration", type=float, default=2.0)
    p.add_argument("--press-threshold", type=float, default=0.01)


def _simulate_one(job):
    """Worker: simulate and write one subject (used by --jobs)."""
    (index, seed, out_dir, protocol, flow_kind, flow_args, report_noise_sd, inline) = job
    subject_id = f"sim{index:03d}"
    config = protocol
    n_trials = config.sessions * config.trials_per_session
    flow = gen_flow_process(flow_kind, n_trials, seed=int(seed), **flow_args)
    schedule = schedule_probes(
        config.sessions, config.trials_per_session,
        config.probes_per_session, config.min_gap, seed=int(seed) + 1,
    )
    subject = simulate_subject(
        SimParams(), config.trial, schedule, flow,
        report_noise_sd=report_noise_sd, seed=int(seed),
        skill_trials=config.skill_trials,
        initial_band=config.initial_band, k1=config.k1, k2=config.k2,
        probe_window=config.probe_window,
    )
    provenance = {
        "seed": int(seed),
        "tool_version": __version__,
        "flow_kind": flow_kind,
        "report_noise_sd": report_noise_sd,
    }
    data = session_from_subject(subject, subject_id, config, provenance)
    path = Path(out_dir) / f"{subject_id}.json"
    write_session(data, path, inline_traces=inline)
    return subject_id, data.success_rate, len(data.probes)


def cmd_simulate(args) -> int:
    if args.subjects < 1:
        log.error("--subjects must be >= 1")
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    protocol = _protocol_from_args(args)
    if args.flow_kind == "sinusoid-mixture":
        try:
            components = tuple(
                (float(a), float(p)) for a, p in json.loads(args.flow_components)
            )
        except (ValueError, TypeError) as exc:
            log.error("bad --flow-components (want JSON [[amplitude, period_s], ...]): %s", exc)
            return 2
        flow_args = {"mean": args.flow_mean, "components": components,
                     "noise_sd": args.flow_noise_sd}
    else:
        flow_args = {"mean": args.flow_mean, "sd": args.flow_sd,
                     "relaxation_s": args.flow_relaxation}
    rng = np.random.SeedSequence(args.seed)
    seeds = rng.generate_state(args.subjects).tolist()
    jobs = [
        (i, seeds[i], str(out_dir), protocol, args.flow_kind, flow_args,
         args.report_noise_sd, not args.trace_files)
        for i in range(args.subjects)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]
    summary = {
        "subjects": len(results),
        "out_dir": str(out_dir),
        "mean_success_rate": float(np.mean([r[1] for r in results])),
        "probes_per_subject": int(results[0][2]) if results else 0,
        "seed": args.seed,
    }
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        log.info("wrote %d sessions to %s (mean success %.2f, %d probes each)",
                 summary["subjects"], out_dir, summary["mean_success_rate"],
                 summary["probes_per_subject"])
    return 0


def _load_sessions(input_dir: Path):
    files = sorted(Path(input_dir).glob("*.json"))
    if not files:
        raise InvalidInputError(f"no session files in {input_dir}")
    return [read_session(f) for f in files]


def cmd_decode(args) -> int:
    try:
        sessions = _load_sessions(args.input)
    except (InvalidInputError, FormatError) as exc:
        log.error("%s", exc)
        return 1
    report = cohort_report(
        sessions,
        replicates=args.replicates,
        seed=args.seed,
        max_size=args.max_subset,
        window=args.probe_window,
        reselect=not args.fixed_subset_nulls,
        qc=not args.no_qc,
        psd_segment=args.psd_segment,
    )
    write_report(report, args.out)
    cohort = report["cohort"]
    summary = {
        "out": str(args.out),
        "n_analyzed": cohort.get("n_analyzed", 0),
        "n_excluded": cohort.get("n_excluded", 0),
        "pooled_r": cohort.get("pooled_r"),
        "mean_nrmse": cohort.get("mean_nrmse"),
        "n_pass_random": cohort.get("n_pass_random"),
        "n_pass_permutation": cohort.get("n_pass_permutation"),
        "replicates": args.replicates,
    }
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        log.info("report %s: pooled r=%s mean NRMSE=%s pass %s/%s (random), %s excluded",
                 args.out, summary["pooled_r"], summary["mean_nrmse"],
                 summary["n_pass_random"], summary["n_analyzed"], summary["n_excluded"])
    return 0


def cmd_psd(args) -> int:
    from .decode import decode_timeseries, select_subset
    from .pipeline import probe_features

    try:
        sessions = _load_sessions(args.input)
    except (InvalidInputError, FormatError) as exc:
        log.error("%s", exc)
        return 1
    rows = []
    for session in sorted(sessions, key=lambda s: s.subject_id):
        row = analyze_subject(session, replicates=args.replicates, seed=args.seed,
                              window=args.probe_window, psd_segment=args.psd_segment)
        entry = {
            "subject_id": row["subject_id"],
            "timescale_s": row.get("flow_timescale_s"),
            "p_random": row.get("random_test", {}).get("p_value"),
        }
        if "timescale_error" in row:
            entry["warning"] = row["timescale_error"]
            log.warning("%s: %s", row["subject_id"], row["timescale_error"])
        if args.spectra_dir and "selected_subset" in row:
            probes, metrics = probe_features(session, args.probe_window)
            model = select_subset(probes, metrics).model
            _, series = decode_timeseries(model, session.all_trials,
                                          args.probe_window or session.config.probe_window)
            psd = welch_psd(series, FLOW_SERIES_FS, segment_length=args.psd_segment)
            out_dir = Path(args.spectra_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            lines = ["freq_hz,power"] + [
                f"{f:.9g},{p:.9g}" for f, p in zip(psd.frequencies, psd.power)
            ]
            (out_dir / f"{row['subject_id']}.csv").write_text("\n".join(lines) + "\n")
        rows.append(entry)
    kept = [r["timescale_s"] for r in rows
            if r["timescale_s"] is not None
            and r["p_random"] is not None and r["p_random"] < 0.05]
    summary = {
        "subjects": rows,
        "cohort": {
            "n_subjects": len(kept),
            "mean_timescale_s": float(np.mean(kept)) if kept else None,
            "sd_timescale_s": float(np.std(kept)) if kept else None,
        },
        "fs_hz": FLOW_SERIES_FS,
    }
    if args.out:
        write_report(summary, args.out)
    print(json.dumps(summary if args.json else summary["cohort"], sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    static_dir = args.static_dir
    if static_dir is not None and not Path(static_dir).is_dir():
        log.error("static asset directory not found: %s", static_dir)
        return 1
    app = create_app(data_dir=Path(args.data_dir), static_dir=static_dir,
                     replicates=args.replicates, seed=args.seed)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except SystemExit:
        raise
    except OSError as exc:
        log.error("failed to bind %s:%d: %s", args.host, args.port, exc)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowtrace",
                                     description="Flow decoding from force-control performance.")
    parser.add_argument("--version", action="version", version=f"flowtrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a synthetic cohort")
    p_sim.add_argument("--subjects", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--report-noise-sd", type=float, default=0.5)
    p_sim.add_argument("--flow-kind", choices=["ou", "sinusoid-mixture"],
                       default="sinusoid-mixture")
    p_sim.add_argument("--flow-mean", type=float, default=4.0)
    p_sim.add_argument("--flow-sd", type=float, default=1.2)
    p_sim.add_argument("--flow-relaxation", type=float, default=20.0)
    p_sim.add_argument("--flow-components", default="[[1.3, 90.0], [1.0, 20.0]]",
                       help="JSON list of [amplitude, period_s] sinusoid components")
    p_sim.add_argument("--flow-noise-sd", type=float, default=0.3)
    p_sim.add_argument("--trace-files", action="store_true",
                       help="write traces as CSV files instead of inline JSON")
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--json", action="store_true")
    _add_protocol_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_dec = sub.add_parser("decode", help="decode sessions and write the report")
    p_dec.add_argument("--input", required=True, help="directory of session JSON files")
    p_dec.add_argument("--out", required=True)
    p_dec.add_argument("--replicates", type=int, default=1000,
                       help="random/permutation test replicates")
    p_dec.add_argument("--seed", type=int, default=0)
    p_dec.add_argument("--max-subset", type=int, default=4)
    p_dec.add_argument("--probe-window", type=int, default=None)
    p_dec.add_argument("--no-qc", action="store_true")
    p_dec.add_argument("--fixed-subset-nulls", action="store_true",
                       help="score null replicates with the selected subset "
                            "instead of re-running selection")
    p_dec.add_argument("--psd-segment", type=int, default=None)
    p_dec.add_argument("--json", action="store_true")
    p_dec.set_defaults(func=cmd_decode)

    p_psd = sub.add_parser("psd", help="spectral timescale of decoded flow")
    p_psd.add_argument("--input", required=True)
    p_psd.add_argument("--out", default=None)
    p_psd.add_argument("--replicates", type=int, default=200)
    p_psd.add_argument("--seed", type=int, default=0)
    p_psd.add_argument("--probe-window", type=int, default=None)
    p_psd.add_argument("--psd-segment", type=int, default=None)
    p_psd.add_argument("--spectra-dir", default=None,
                       help="also write per-subject freq/power CSV files here")
    p_psd.add_argument("--json", action="store_true")
    p_psd.set_defaults(func=cmd_psd)

    p_srv = sub.add_parser("serve", help="run the live task service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8080)
    p_srv.add_argument("--data-dir", default="flowtrace-data")
    p_srv.add_argument("--static-dir", default=None)
    p_srv.add_argument("--replicates", type=int, default=1000)
    p_srv.add_argument("--seed", type=int, default=0)
    p_srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InvalidInputError, FormatError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

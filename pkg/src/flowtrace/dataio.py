"""On-disk formats: trace CSV, session JSON, report JSON.

All writes are atomic (temp file + rename) and byte-deterministic: keys
are sorted and floats serialized with repr round-tripping, so identical
inputs produce identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .decode import FlowProbe
from .errors import FormatError, ParseError, SchemaVersionError
from .task import ForceTrace, StaircaseState, TrialConfig, TrialRecord

SESSION_SCHEMA = "flowtrace-session/1"
REPORT_SCHEMA = "flowtrace-report/1"


@dataclass(frozen=True)
class ProtocolConfig:
    """Full experiment protocol; CLI flags mirror these field names."""

    trial: TrialConfig = TrialConfig()
    sessions: int = 3
    trials_per_session: int = 100
    probes_per_session: int = 4
    min_gap: int = 12
    practice_trials: int = 2
    skill_trials: int = 50
    skill_transitions: int = 10
    k1: float = 0.5
    k2: float = 0.05
    initial_band: float = 0.2
    probe_window: int = 5
    metric_rate: float = 1000.0


@dataclass
class StaircaseRecord:
    """Flattened staircase trajectory persisted with a session."""

    k1: float
    k2: float
    initial_band: float
    bands: list[float]
    successes: list[bool]
    transition_points: list[int]
    measured_band: float | None

    @staticmethod
    def from_state(state: StaircaseState, measured_band: float | None) -> "StaircaseRecord":
        return StaircaseRecord(
            k1=state.k1,
            k2=state.k2,
            initial_band=state.history[0][0] if state.history else state.current_band,
            bands=[b for b, _ in state.history],
            successes=[s for _, s in state.history],
            transition_points=list(state.transition_points),
            measured_band=measured_band,
        )


@dataclass
class SessionData:
    """One subject's persisted session: protocol, staircase, trials per
    main session, probes, optional ground-truth flow, and provenance."""

    subject_id: str
    config: ProtocolConfig
    staircase: StaircaseRecord | None
    sessions: list[list[TrialRecord]]
    probes: list[FlowProbe]
    flow_truth: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    live: dict | None = None  # service-side resume state; opaque here

    @property
    def all_trials(self) -> list[TrialRecord]:
        return [t for session in self.sessions for t in session]

    @property
    def success_rate(self) -> float:
        trials = self.all_trials
        return float(np.mean([t.success for t in trials])) if trials else 0.0


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n").encode()


def write_trace(trace: ForceTrace, path: str | Path):
    """CSV with header ``t_s,force_n``, 9-significant-digit values."""
    lines = ["t_s,force_n"]
    for i, force in enumerate(trace.samples):
        lines.append(f"{i * trace.dt:.9g},{force:.9g}")
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_trace(path: str | Path) -> ForceTrace:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "t_s,force_n":
        raise ParseError("missing or wrong header (expected 't_s,force_n')", 1)
    times = []
    forces = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 columns, got {len(parts)}", lineno)
        try:
            times.append(float(parts[0]))
            forces.append(float(parts[1]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if len(times) < 1:
        raise ParseError("no samples", 2)
    times_arr = np.asarray(times)
    if np.any(np.diff(times_arr) <= 0):
        bad = int(np.flatnonzero(np.diff(times_arr) <= 0)[0])
        raise FormatError(f"non-monotone time at row {bad + 3}")
    dt = float(times_arr[1] - times_arr[0]) if len(times) > 1 else 0.001
    return ForceTrace(dt, np.asarray(forces))


def _trace_to_json(trace: ForceTrace) -> dict:
    return {"dt": trace.dt, "samples": [float(v) for v in trace.samples]}


def _trace_from_json(obj: dict) -> ForceTrace:
    return ForceTrace(float(obj["dt"]), np.asarray(obj["samples"], dtype=float))


def _record_to_json(record: TrialRecord, trace_ref: str | None) -> dict:
    out = {
        "band_width": record.config.band_width,
        "success": record.success,
        "press_onset": record.press_onset,
        "band_entry": record.band_entry,
        "success_latch": record.success_latch,
    }
    if trace_ref is None:
        out["trace"] = _trace_to_json(record.trace)
    else:
        out["trace_ref"] = trace_ref
    return out


def _record_from_json(obj: dict, base_config: TrialConfig, base_dir: Path) -> TrialRecord:
    config = replace(base_config, band_width=float(obj["band_width"]))
    if "trace" in obj:
        trace = _trace_from_json(obj["trace"])
    else:
        ref = base_dir / obj["trace_ref"]
        if not ref.exists():
            raise FileNotFoundError(f"referenced trace missing: {ref}")
        trace = read_trace(ref)
    return TrialRecord(
        config=config,
        trace=trace,
        success=bool(obj["success"]),
        press_onset=obj["press_onset"],
        band_entry=obj["band_entry"],
        success_latch=obj["success_latch"],
    )


def write_session(data: SessionData, path: str | Path, inline_traces: bool = True):
    """Single JSON document; traces inline by default, or referenced as CSV
    files in ``<name>_traces/`` next to the session file."""
    path = Path(path)
    doc = {
        "schema": SESSION_SCHEMA,
        "subject_id": data.subject_id,
        "config": {
            **{k: v for k, v in asdict(data.config).items() if k != "trial"},
            "trial": asdict(data.config.trial),
        },
        "staircase": asdict(data.staircase) if data.staircase else None,
        "sessions": [],
        "probes": [
            {
                "probe_index": p.probe_index,
                "session": p.session,
                "trial_index": p.trial_index,
                "responses": list(p.responses),
            }
            for p in data.probes
        ],
        "flow_truth": None if data.flow_truth is None else [float(v) for v in data.flow_truth],
        "provenance": data.provenance,
        "live": data.live,
    }
    for s, session in enumerate(data.sessions, start=1):
        rows = []
        for j, record in enumerate(session, start=1):
            if inline_traces:
                rows.append(_record_to_json(record, None))
            else:
                ref = f"{path.stem}_traces/s{s}_t{j}.csv"
                write_trace(record.trace, path.parent / ref)
                rows.append(_record_to_json(record, ref))
        doc["sessions"].append(rows)
    _atomic_write(path, _dump_json(doc))


def read_session(path: str | Path) -> SessionData:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    schema = doc.get("schema", "<absent>")
    if schema != SESSION_SCHEMA:
        raise SchemaVersionError(SESSION_SCHEMA, schema)
    cfg = dict(doc["config"])
    trial = TrialConfig(**cfg.pop("trial"))
    config = ProtocolConfig(trial=trial, **cfg)
    stair = None
    if doc.get("staircase") is not None:
        stair = StaircaseRecord(**doc["staircase"])
    sessions = [
        [_record_from_json(row, trial, path.parent) for row in session]
        for session in doc["sessions"]
    ]
    probes = [
        FlowProbe(
            probe_index=p["probe_index"],
            session=p["session"],
            trial_index=p["trial_index"],
            responses=tuple(p["responses"]),
        )
        for p in doc["probes"]
    ]
    flow = None if doc.get("flow_truth") is None else np.asarray(doc["flow_truth"], dtype=float)
    return SessionData(
        subject_id=doc["subject_id"],
        config=config,
        staircase=stair,
        sessions=sessions,
        probes=probes,
        flow_truth=flow,
        provenance=doc.get("provenance", {}),
        live=doc.get("live"),
    )


def write_report(report: dict, path: str | Path):
    """Persist an analysis report as deterministic JSON."""
    doc = {"schema": REPORT_SCHEMA, **report}
    _atomic_write(Path(path), _dump_json(doc))


def read_report(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    schema = doc.get("schema", "<absent>")
    if schema != REPORT_SCHEMA:
        raise SchemaVersionError(REPORT_SCHEMA, schema)
    return doc

"""Live task backend.

A session is driven entirely by client-timestamped samples, so replaying a
recorded message stream reproduces the session exactly: trial windows,
staircase updates, probe scheduling, decoder refits, and the final report
are all pure functions of the stream. The HTTP/WebSocket layer wraps a
synchronous engine; per-session processing is serialized.
"""

from __future__ import annotations

import asyncio
import json
import logging
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles

from .dataio import ProtocolConfig, SessionData, StaircaseRecord, read_session, write_report, write_session
from .decode import FlowProbe, predict, select_subset
from .errors import InsufficientDataError, InvalidInputError, ProtocolError
from .metrics import METRIC_NAMES, probe_metrics, resample_trace, trial_metrics
from .pipeline import cohort_report
from .task import StaircaseState, TrialConfig, evaluate_trial, measured_skill, schedule_probes

log = logging.getLogger("flowtrace.service")

PROBE_QUESTIONS = (
    "My thoughts/activities run fluidly and smoothly.",
    "I have no difficulty concentrating.",
    "I do not notice time passing.",
)


@dataclass
class Event:
    type: str
    payload: dict

    def frame(self) -> dict:
        return {"type": self.type, **self.payload}


@dataclass
class _OpenTrial:
    phase: str
    session: int  # 1-based main session, 0 otherwise
    index: int  # 1-based within phase/session
    start_t: float
    band_width: float
    times: list[float] = field(default_factory=list)
    forces: list[float] = field(default_factory=list)


class SessionEngine:
    """Synchronous core of one live session."""

    def __init__(self, session_id: str, config: ProtocolConfig, seed: int = 0):
        self.id = session_id
        self.config = config
        self.seed = seed
        self.phase = "practice"
        self.practice_done = 0
        self.staircase = StaircaseState(
            current_band=config.initial_band, k1=config.k1, k2=config.k2
        )
        self.band = config.initial_band
        self.schedule = schedule_probes(
            config.sessions, config.trials_per_session,
            config.probes_per_session, config.min_gap, seed=seed,
        )
        self.main_session = 0
        self.trial_in_session = 0
        self.sessions: list[list] = [[] for _ in range(config.sessions)]
        self.probes: list[FlowProbe] = []
        self.pending_probe: tuple[int, int] | None = None
        self.decoder = None
        self.skill: float | None = None
        self.notices = 0
        self.finalized = False
        self.last_t = -np.inf
        self.earliest_start = 0.0
        self.open_trial: _OpenTrial | None = None

    # -- construction from persisted state ---------------------------------

    @staticmethod
    def resume(data: SessionData) -> "SessionEngine":
        live = data.live or {}
        engine = SessionEngine(data.subject_id, data.config, seed=live.get("seed", 0))
        engine.phase = live.get("phase", "practice")
        engine.practice_done = live.get("practice_done", 0)
        engine.main_session = live.get("main_session", 0)
        engine.trial_in_session = live.get("trial_in_session", 0)
        engine.band = live.get("band", data.config.initial_band)
        engine.skill = live.get("skill")
        engine.notices = live.get("notices", 0)
        engine.finalized = live.get("finalized", False)
        engine.last_t = live.get("last_t", -np.inf)
        engine.earliest_start = live.get("earliest_start", 0.0)
        if live.get("pending_probe") is not None:
            engine.pending_probe = tuple(live["pending_probe"])
        if data.staircase is not None:
            st = StaircaseState(
                current_band=live.get("staircase_band", data.config.initial_band),
                k1=data.staircase.k1, k2=data.staircase.k2,
            )
            st.history = list(zip(data.staircase.bands, data.staircase.successes))
            st.trial_index = len(st.history)
            st.transition_points = list(data.staircase.transition_points)
            engine.staircase = st
            # Recreate the step direction from the recorded bands.
            bands = data.staircase.bands + [live.get("staircase_band", st.current_band)]
            if len(bands) >= 2:
                engine.staircase._last_direction = int(np.sign(bands[-1] - bands[-2]) or 0)
        engine.sessions = [list(s) for s in data.sessions]
        while len(engine.sessions) < data.config.sessions:
            engine.sessions.append([])
        engine.probes = list(data.probes)
        engine._maybe_refit()
        return engine

    # -- persistence --------------------------------------------------------

    def to_session_data(self) -> SessionData:
        stair = StaircaseRecord.from_state(self.staircase, self.skill)
        live = {
            "seed": self.seed,
            "phase": self.phase,
            "practice_done": self.practice_done,
            "main_session": self.main_session,
            "trial_in_session": self.trial_in_session,
            "band": self.band,
            "staircase_band": self.staircase.current_band,
            "skill": self.skill,
            "notices": self.notices,
            "finalized": self.finalized,
            "last_t": None if self.last_t == -np.inf else self.last_t,
            "earliest_start": self.earliest_start,
            "pending_probe": list(self.pending_probe) if self.pending_probe else None,
        }
        return SessionData(
            subject_id=self.id,
            config=self.config,
            staircase=stair,
            sessions=[list(s) for s in self.sessions],
            probes=list(self.probes),
            flow_truth=None,
            provenance={"seed": self.seed, "tool_version": _tool_version(), "live": True},
            live=live,
        )

    # -- state machine ------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.phase == "done"

    def _trial_config(self) -> TrialConfig:
        return replace(self.config.trial, band_width=self.band)

    def _main_records(self) -> list:
        return [t for s in self.sessions for t in s]

    def ingest_sample(self, t: float, force: float) -> list[Event]:
        """Feed one timestamped sample; returns emitted events."""
        if self.finalized or self.done:
            self.notices += 1
            return []
        if t < self.last_t - 1e-9:
            raise ProtocolError(f"timestamp regression: {t} after {self.last_t}")
        self.last_t = max(self.last_t, t)
        events: list[Event] = []

        if self.open_trial is not None:
            trial = self.open_trial
            if t < trial.start_t + self.config.trial.trial_duration:
                trial.times.append(t - trial.start_t)
                trial.forces.append(max(0.0, force))
                return events
            events.extend(self._close_trial())

        if self.pending_probe is not None:
            self.notices += 1  # input during the probe dialog
            return events
        if self.done:
            return events
        if t < self.earliest_start:
            return events  # expected inter-trial rest
        if force > self.config.trial.press_threshold:
            self.notices += 1  # cannot start a trial while pressing
            return events
        events.extend(self._open_trial(t, force))
        return events

    def _open_trial(self, t: float, force: float) -> list[Event]:
        events = []
        if self.phase == "practice" and self.practice_done >= self.config.practice_trials:
            self.phase = "skill_measurement"
            events.append(Event("phase_change", {"phase": self.phase}))
        if self.phase == "skill_measurement":
            self.band = self.staircase.current_band
        if self.phase == "rest":
            self.phase = f"main_{self.main_session + 1}"
            events.append(Event("phase_change", {"phase": self.phase}))

        if self.phase == "practice":
            index = self.practice_done + 1
            session = 0
        elif self.phase == "skill_measurement":
            index = self.staircase.trial_index + 1
            session = 0
        else:
            index = self.trial_in_session + 1
            session = self.main_session + 1
        self.open_trial = _OpenTrial(
            phase=self.phase, session=session, index=index,
            start_t=t, band_width=self.band,
        )
        self.open_trial.times.append(0.0)
        self.open_trial.forces.append(max(0.0, force))
        events.append(Event("trial_start", {
            "index": index,
            "band_width": self.band,
            "target_force": self.config.trial.target_force,
        }))
        return events

    def _close_trial(self) -> list[Event]:
        trial = self.open_trial
        self.open_trial = None
        config = replace(self.config.trial, band_width=trial.band_width)
        trace = resample_trace(
            np.asarray(trial.times), np.asarray(trial.forces),
            config.trial_duration, self.config.metric_rate,
        )
        record = evaluate_trial(trace, config)
        self.earliest_start = trial.start_t + config.trial_duration + config.rest_duration
        events: list[Event] = []

        if trial.phase == "practice":
            self.practice_done += 1
            window = [record]
        elif trial.phase == "skill_measurement":
            self.staircase.update(record)
            window = [record]
        else:
            session_records = self.sessions[trial.session - 1]
            session_records.append(record)
            self.trial_in_session = trial.index
            lo = max(0, len(session_records) - self.config.probe_window)
            window = session_records[lo:]

        mv = trial_metrics(record, window)
        events.append(Event("trial_end", {
            "index": trial.index,
            "success": record.success,
            "metrics": {k: float(v) for k, v in zip(METRIC_NAMES, mv.as_array())},
        }))

        if trial.phase == "skill_measurement":
            if (self.staircase.trial_index >= self.config.skill_trials
                    and len(self.staircase.transition_points) >= self.config.skill_transitions):
                self.skill = measured_skill(self.staircase, self.config.skill_transitions)
                self.band = self.skill
                self.main_session = 0
                self.trial_in_session = 0
                self.phase = "main_1"
                events.append(Event("phase_change", {"phase": self.phase}))
        elif trial.phase.startswith("main_"):
            if trial.index in self.schedule.probes_in(trial.session):
                self.pending_probe = (trial.session, trial.index)
                events.append(Event("probe_request", {"questions": list(PROBE_QUESTIONS)}))
            if self.decoder is not None:
                records = self._main_records()
                if len(records) >= self.config.probe_window:
                    mv_win = probe_metrics(records, len(records), self.config.probe_window)
                    events.append(Event("flow_update", {
                        "trial_index": len(records),
                        "intensity": float(predict(self.decoder, mv_win)),
                    }))
            if trial.index >= self.config.trials_per_session:
                if trial.session >= self.config.sessions:
                    self.phase = "done"
                else:
                    self.main_session = trial.session
                    self.trial_in_session = 0
                    self.phase = "rest"
                events.append(Event("phase_change", {"phase": self.phase}))
        return events

    def answer_probe(self, r1: int, r2: int, r3: int) -> list[Event]:
        if self.pending_probe is None:
            raise ProtocolError("no probe pending")
        responses = (r1, r2, r3)
        if any(not isinstance(r, int) or not 1 <= r <= 7 for r in responses):
            raise InvalidInputError("probe responses must be integers in 1..7")
        session, trial_index = self.pending_probe
        self.pending_probe = None
        self.probes.append(FlowProbe(
            probe_index=len(self.probes) + 1,
            trial_index=trial_index,
            responses=responses,
            session=session,
        ))
        self._maybe_refit()
        return []

    def _maybe_refit(self):
        if len(self.probes) < 5:
            return
        try:
            metrics = [
                probe_metrics(self.sessions[p.session - 1], p.trial_index, self.config.probe_window)
                for p in self.probes
            ]
            self.decoder = select_subset(self.probes, metrics, 4).model
        except (ArithmeticError, InsufficientDataError, ZeroDivisionError) as exc:
            log.warning("session %s: decoder refit failed: %s", self.id, exc)

    def finalize(self) -> list[Event]:
        self.open_trial = None
        self.pending_probe = None
        if not self.done:
            self.finalized = True
        return []


def _tool_version() -> str:
    from . import __version__

    return __version__


class SessionStore:
    """In-memory sessions with JSON persistence in a data directory."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.engines: dict[str, SessionEngine] = {}
        self.locks: dict[str, asyncio.Lock] = {}

    def path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.json"

    def lock(self, session_id: str) -> asyncio.Lock:
        return self.locks.setdefault(session_id, asyncio.Lock())

    def create(self, config: ProtocolConfig, seed: int, subject_id: str | None = None) -> SessionEngine:
        session_id = subject_id or uuid.uuid4().hex[:12]
        if session_id in self.engines or self.path(session_id).exists():
            raise InvalidInputError(f"session {session_id} already exists")
        engine = SessionEngine(session_id, config, seed=seed)
        self.engines[session_id] = engine
        self.persist(engine)
        return engine

    def get(self, session_id: str) -> SessionEngine:
        if session_id in self.engines:
            return self.engines[session_id]
        path = self.path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        engine = SessionEngine.resume(read_session(path))
        self.engines[session_id] = engine
        return engine

    def persist(self, engine: SessionEngine):
        write_session(engine.to_session_data(), self.path(engine.id))

    def flush_all(self):
        for engine in self.engines.values():
            self.persist(engine)


def _config_from_overrides(overrides: dict) -> tuple[ProtocolConfig, int, str | None]:
    base = ProtocolConfig()
    trial_fields = set(TrialConfig.__dataclass_fields__)
    protocol_fields = set(ProtocolConfig.__dataclass_fields__) - {"trial"}
    trial_kwargs = {}
    protocol_kwargs = {}
    seed = 0
    subject_id = None
    for key, value in (overrides or {}).items():
        if key == "seed":
            seed = int(value)
        elif key == "subject_id":
            subject_id = str(value)
        elif key in trial_fields:
            trial_kwargs[key] = value
        elif key in protocol_fields:
            protocol_kwargs[key] = value
        else:
            raise InvalidInputError(f"unknown config field {key!r}")
    trial = replace(base.trial, **trial_kwargs)
    config = replace(base, trial=trial, **protocol_kwargs)
    return config, seed, subject_id


def _session_state(engine: SessionEngine) -> dict:
    return {
        "id": engine.id,
        "phase": engine.phase,
        "band_width": engine.band,
        "skill": engine.skill,
        "practice_done": engine.practice_done,
        "skill_trials_done": engine.staircase.trial_index,
        "main_session": engine.main_session + (1 if engine.phase.startswith("main_") else 0),
        "trials_done": sum(len(s) for s in engine.sessions),
        "probes_answered": len(engine.probes),
        "probe_pending": engine.pending_probe is not None,
        "decoder_ready": engine.decoder is not None,
        "notices": engine.notices,
        "finalized": engine.finalized,
        "done": engine.done,
    }


def create_app(
    data_dir: Path | str = "flowtrace-data",
    static_dir: str | None = None,
    replicates: int = 1000,
    seed: int = 0,
) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        app.state.store.flush_all()

    app = FastAPI(title="flowtrace", version=_tool_version(), lifespan=lifespan)
    store = SessionStore(Path(data_dir))
    app.state.store = store
    app.state.replicates = replicates
    app.state.seed = seed

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "version": _tool_version()}

    @app.post("/api/session")
    async def create_session(overrides: dict | None = None):
        try:
            config, session_seed, subject_id = _config_from_overrides(overrides or {})
            engine = store.create(config, session_seed, subject_id)
        except InvalidInputError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        state = _session_state(engine)
        state["config"] = json.loads(json.dumps({
            **{k: v for k, v in engine.config.__dict__.items() if k != "trial"},
            "trial": engine.config.trial.__dict__,
        }))
        return state

    def _get_engine(session_id: str) -> SessionEngine:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.get("/api/session/{session_id}")
    async def get_session(session_id: str):
        return _session_state(_get_engine(session_id))

    @app.post("/api/session/{session_id}/finalize")
    async def finalize_session(session_id: str):
        engine = _get_engine(session_id)
        async with store.lock(session_id):
            engine.finalize()
            store.persist(engine)
        return _session_state(engine)

    @app.get("/api/session/{session_id}/report")
    async def session_report(session_id: str, replicates: int | None = None,
                             seed: int | None = None, qc: bool = True):
        engine = _get_engine(session_id)
        if not engine.done and not engine.finalized:
            raise HTTPException(status_code=409, detail="session not finished or finalized")
        async with store.lock(session_id):
            store.persist(engine)
            data = read_session(store.path(session_id))
        report = cohort_report(
            [data],
            replicates=replicates if replicates is not None else app.state.replicates,
            seed=seed if seed is not None else app.state.seed,
            qc=qc,
        )
        if engine.finalized and not engine.done:
            report["partial"] = True
        path = store.data_dir / "reports" / f"{session_id}.json"
        write_report(report, path)
        return Response(content=path.read_bytes(), media_type="application/json")

    @app.websocket("/api/session/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        try:
            engine = store.get(session_id)
        except KeyError:
            await websocket.close(code=1008, reason="unknown session")
            return
        await websocket.send_json({"type": "phase_change", "phase": engine.phase})
        try:
            while True:
                message = await websocket.receive_json()
                events: list[Event] = []
                async with store.lock(session_id):
                    mtype = message.get("type")
                    try:
                        if mtype == "sample":
                            before = sum(len(s) for s in engine.sessions) + engine.staircase.trial_index + engine.practice_done
                            events = engine.ingest_sample(float(message["t"]), float(message["force"]))
                            after = sum(len(s) for s in engine.sessions) + engine.staircase.trial_index + engine.practice_done
                            if after != before:
                                store.persist(engine)
                        elif mtype == "probe_response":
                            events = engine.answer_probe(
                                int(message["r1"]), int(message["r2"]), int(message["r3"])
                            )
                            store.persist(engine)
                        else:
                            await websocket.close(code=1003, reason=f"unknown type {mtype!r}")
                            return
                    except ProtocolError as exc:
                        await websocket.close(code=1002, reason=str(exc))
                        return
                    except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                        await websocket.close(code=1007, reason=str(exc))
                        return
                for event in events:
                    await websocket.send_json(event.frame())
        except WebSocketDisconnect:
            async with store.lock(session_id):
                store.persist(engine)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app

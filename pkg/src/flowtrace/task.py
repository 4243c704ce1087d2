"""Trial mechanics: success evaluation, streaming evaluation, the adaptive
difficulty staircase used for skill measurement, and probe scheduling.

A trial asks the subject to hold a fingertip force inside a tolerance band
around a target for a minimum contiguous duration. The band width is the
task difficulty: the staircase narrows it after successes and widens it
after failures until the success probability settles near 0.5, and the
skill estimate is the average band width over the last ten reversals of
the difficulty sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidInputError,
    PrematurePressError,
    ProtocolError,
)


@dataclass(frozen=True)
class TrialConfig:
    """Per-trial task parameters.

    ``band_width`` is the full tolerance width: a force F is in band iff
    ``|F - target_force| <= band_width / 2``.
    """

    target_force: float = 1.0
    band_width: float = 0.2
    trial_duration: float = 3.0
    hold_duration: float = 0.5
    rest_duration: float = 2.0
    press_threshold: float = 0.01

    def __post_init__(self):
        if min(self.trial_duration, self.hold_duration, self.rest_duration) <= 0:
            raise InvalidInputError("all durations must be > 0")
        if self.hold_duration > self.trial_duration:
            raise InvalidInputError("hold_duration must not exceed trial_duration")
        if self.band_width <= 0:
            raise InvalidInputError("band_width must be > 0")
        if not 0 <= self.press_threshold < self.target_force:
            raise InvalidInputError("press_threshold must be in [0, target_force)")

    def in_band(self, force: np.ndarray | float) -> np.ndarray | bool:
        return np.abs(force - self.target_force) <= self.band_width / 2.0


@dataclass(frozen=True, eq=False)
class ForceTrace:
    """Uniformly sampled force sequence for one trial.

    samples[i] is the force over [i*dt, (i+1)*dt).
    """

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidInputError("dt must be > 0")
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise InvalidInputError("samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidInputError("samples must be finite")
        if samples.size and samples.min() < 0:
            raise InvalidInputError("samples must be >= 0")

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """A trial's config, trace, outcome, and derived event times."""

    config: TrialConfig
    trace: ForceTrace
    success: bool
    press_onset: float | None
    band_entry: float | None
    success_latch: float | None

    @property
    def completing_time_censored(self) -> float:
        """Success-latch time, censored to the trial duration on failure."""
        if self.success_latch is not None:
            return self.success_latch
        return self.config.trial_duration


def evaluate_trial(trace: ForceTrace, config: TrialConfig) -> TrialRecord:
    """Score one trial: a success is a contiguous in-band run lasting at
    least ``hold_duration``.

    Returns the record with press onset (first sample above the press
    threshold), band entry (first in-band sample at or after onset), and
    the success latch (the instant the hold completes, i.e. run start +
    hold_duration of the first qualifying run).
    """
    samples = trace.samples
    if samples.size == 0:
        raise InvalidInputError("empty trace")
    if trace.duration > config.trial_duration + trace.dt / 2:
        raise InvalidInputError(
            f"trace covers {trace.duration:.3f}s, longer than the "
            f"{config.trial_duration:.3f}s trial"
        )
    if samples[0] > config.press_threshold:
        raise PrematurePressError(
            f"first sample {samples[0]:.4f}N exceeds press threshold "
            f"{config.press_threshold:.4f}N"
        )

    dt = trace.dt
    pressed = np.flatnonzero(samples > config.press_threshold)
    if pressed.size == 0:
        return TrialRecord(config, trace, False, None, None, None)
    onset_idx = int(pressed[0])
    press_onset = onset_idx * dt

    in_band = config.in_band(samples)
    in_band[:onset_idx] = False
    band_idx = np.flatnonzero(in_band)
    if band_idx.size == 0:
        return TrialRecord(config, trace, False, press_onset, None, None)
    band_entry = float(band_idx[0]) * dt

    # First contiguous run whose sample count covers the hold duration.
    needed = int(np.ceil(config.hold_duration / dt - 1e-9))
    run_breaks = np.flatnonzero(np.diff(band_idx) > 1)
    run_starts = np.concatenate(([0], run_breaks + 1))
    run_ends = np.concatenate((run_breaks, [band_idx.size - 1]))
    for s, e in zip(run_starts, run_ends):
        if e - s + 1 >= needed:
            latch = band_idx[s] * dt + config.hold_duration
            return TrialRecord(config, trace, True, press_onset, band_entry, float(latch))
    return TrialRecord(config, trace, False, press_onset, band_entry, None)


@dataclass(frozen=True)
class TrialEvent:
    kind: str  # trial_started | success_latched | trial_ended
    t: float
    record: TrialRecord | None = None


class TrialStream:
    """Streaming twin of :func:`evaluate_trial`.

    Feed samples on a uniform ``dt`` grid with nondecreasing timestamps;
    the final record is identical to batch evaluation of the accumulated
    trace. The trial ends when a sample at or past ``trial_duration``
    arrives, or on :meth:`close`.
    """

    def __init__(self, config: TrialConfig, dt: float = 0.001):
        if dt <= 0:
            raise InvalidInputError("dt must be > 0")
        self.config = config
        self.dt = dt
        self._forces: list[float] = []
        self._last_t: float | None = None
        self._run_start_idx: int | None = None
        self._latched = False
        self._onset_seen = False
        self._started = False
        self._ended = False
        self.record: TrialRecord | None = None

    def push(self, t: float, force: float) -> list[TrialEvent]:
        if self._ended:
            raise ProtocolError("sample after trial end")
        if self._last_t is not None and t < self._last_t - 1e-12:
            raise ProtocolError(f"timestamp regression: {t} after {self._last_t}")
        self._last_t = t
        events: list[TrialEvent] = []
        if t >= self.config.trial_duration - 1e-12:
            events.extend(self.close())
            return events
        if not self._started:
            self._started = True
            events.append(TrialEvent("trial_started", t))

        idx = len(self._forces)
        self._forces.append(float(force))
        if not self._onset_seen and force > self.config.press_threshold:
            if idx == 0:
                raise PrematurePressError("first sample exceeds press threshold")
            self._onset_seen = True
        if self._onset_seen and self.config.in_band(force):
            if self._run_start_idx is None:
                self._run_start_idx = idx
            if not self._latched:
                run_len = idx - self._run_start_idx + 1
                if run_len * self.dt >= self.config.hold_duration - 1e-9:
                    self._latched = True
                    latch = self._run_start_idx * self.dt + self.config.hold_duration
                    events.append(TrialEvent("success_latched", latch))
        else:
            self._run_start_idx = None
        return events

    def close(self) -> list[TrialEvent]:
        """Finalize the trial and emit trial_ended with the batch record."""
        if self._ended:
            return []
        self._ended = True
        trace = ForceTrace(self.dt, np.asarray(self._forces, dtype=float))
        self.record = evaluate_trial(trace, self.config)
        return [TrialEvent("trial_ended", len(self._forces) * self.dt, self.record)]


@dataclass
class StaircaseState:
    """Adaptive difficulty track.

    After trial i at band width B_i, the next width is B_i -/+ step for a
    success/failure, where step = min(k1/i, k2/completing_time, B_i/2).
    The B_i/2 cap keeps the width strictly positive; k1/i shrinks steps as
    the run progresses; the completing-time term penalizes slow successes.
    """

    current_band: float = 0.2
    k1: float = 0.5
    k2: float = 0.05
    trial_index: int = 0
    history: list[tuple[float, bool]] = field(default_factory=list)
    transition_points: list[int] = field(default_factory=list)
    _last_direction: int = 0

    def __post_init__(self):
        if self.current_band <= 0:
            raise InvalidInputError("current_band must be > 0")
        if self.k1 <= 0 or self.k2 <= 0:
            raise InvalidInputError("k1 and k2 must be > 0")

    def step(self, success: bool, completing_time: float) -> float:
        """Advance one trial and return the next band width."""
        if completing_time <= 0:
            raise InvalidInputError("completing_time must be > 0")
        i = self.trial_index + 1
        band = self.current_band
        step = min(self.k1 / i, self.k2 / completing_time, 0.5 * band)
        direction = -1 if success else +1
        self.history.append((band, success))
        if self._last_direction != 0 and direction != self._last_direction:
            self.transition_points.append(i)
        self._last_direction = direction
        self.trial_index = i
        self.current_band = band + direction * step
        return self.current_band

    def update(self, record: TrialRecord) -> float:
        """Advance using a trial record; failed trials use the full trial
        duration as their (censored) completing time."""
        return self.step(record.success, record.completing_time_censored)

    def band_at(self, trial: int) -> float:
        """Band width used in 1-based trial number ``trial``."""
        return self.history[trial - 1][0]


def measured_skill(state: StaircaseState, n_transitions: int = 10) -> float:
    """Skill estimate: mean band width over the last ``n_transitions``
    reversals of the difficulty sequence."""
    if len(state.transition_points) < n_transitions:
        raise InsufficientDataError(
            f"need {n_transitions} transitions, have {len(state.transition_points)}"
        )
    recent = state.transition_points[-n_transitions:]
    return float(np.mean([state.band_at(i) for i in recent]))


@dataclass(frozen=True)
class ProbeSchedule:
    """Per-session 1-based trial indices after which a self-report fires."""

    sessions: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(len(s) for s in self.sessions)

    def probes_in(self, session: int) -> tuple[int, ...]:
        """1-based session number."""
        return self.sessions[session - 1]


def schedule_probes(
    sessions: int,
    trials_per_session: int,
    probes_per_session: int = 4,
    min_gap: int = 12,
    seed: int | np.random.Generator = 0,
) -> ProbeSchedule:
    """Place probes uniformly at random subject to a minimum gap of
    ``min_gap`` trials between adjacent probes and before the first one.

    Uniform over all valid index sets via the monotone bijection
    y_j = u_(j) + j*min_gap with u a uniform multiset from
    {0..trials_per_session - probes_per_session*min_gap}.
    """
    if sessions < 1 or probes_per_session < 1 or min_gap < 1:
        raise InvalidInputError("sessions, probes_per_session, min_gap must be >= 1")
    slack = trials_per_session - probes_per_session * min_gap
    if slack < 0:
        raise InvalidInputError(
            f"infeasible: {probes_per_session} probes with gap {min_gap} need "
            f">= {probes_per_session * min_gap} trials, have {trials_per_session}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for _ in range(sessions):
        v = np.sort(rng.choice(slack + probes_per_session, size=probes_per_session, replace=False))
        u = v - np.arange(probes_per_session)  # nondecreasing multiset in 0..slack
        idx = u + (np.arange(probes_per_session) + 1) * min_gap
        out.append(tuple(int(i) for i in idx))
    return ProbeSchedule(tuple(out))

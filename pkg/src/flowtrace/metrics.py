"""Performance metrics extracted from trial force traces.

Eight metrics per trial/window:

- reaction_time: trial onset -> first sample above the press threshold.
- arriving_time: press onset -> first in-band sample.
- completing_time: trial onset -> the instant the hold completes.
- in_range_time: total in-band duration, counting runs shorter than the hold.
- force_overshoot: |peak force - target| / target.
- average_deviation: mean |F_i - target| from press onset to trial end.
- average_adjust_rate: mean |F_i - F_{i-1}| per second over the same span.
- success_rate: successes / trials over a trailing window.

Timing metrics are censored to the trial duration when the underlying
event never happens, which keeps window averages defined for failed or
press-less trials.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .task import ForceTrace, TrialRecord

METRIC_NAMES = (
    "reaction_time",
    "arriving_time",
    "completing_time",
    "in_range_time",
    "force_overshoot",
    "average_deviation",
    "average_adjust_rate",
    "success_rate",
)


@dataclass(frozen=True)
class MetricsVector:
    reaction_time: float
    arriving_time: float
    completing_time: float
    in_range_time: float
    force_overshoot: float
    average_deviation: float
    average_adjust_rate: float
    success_rate: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in METRIC_NAMES], dtype=float)

    @staticmethod
    def from_array(values: np.ndarray) -> "MetricsVector":
        if len(values) != len(METRIC_NAMES):
            raise InvalidInputError(f"expected {len(METRIC_NAMES)} values")
        return MetricsVector(**{n: float(v) for n, v in zip(METRIC_NAMES, values)})


def trial_metrics(record: TrialRecord, trailing_window: list[TrialRecord] | None = None) -> MetricsVector:
    """Metrics for one trial; success_rate is computed over
    ``trailing_window`` (which includes the current trial; defaults to just
    the current trial)."""
    config = record.config
    trace = record.trace
    samples = trace.samples
    if samples.size == 0:
        raise InvalidInputError("record has an empty trace")
    if trailing_window is None:
        trailing_window = [record]
    if not trailing_window:
        raise InvalidInputError("trailing_window must be non-empty")

    duration = config.trial_duration
    dt = trace.dt

    if record.press_onset is None:
        reaction = duration
        arriving = duration
        onset_idx = 0
    else:
        reaction = record.press_onset
        onset_idx = int(round(record.press_onset / dt))
        if record.band_entry is None:
            arriving = duration - record.press_onset
        else:
            arriving = record.band_entry - record.press_onset

    completing = record.completing_time_censored

    in_band = config.in_band(samples)
    in_range = float(np.count_nonzero(in_band)) * dt

    overshoot = abs(float(samples.max()) - config.target_force) / config.target_force

    span = samples[onset_idx:]
    deviation = float(np.mean(np.abs(span - config.target_force)))
    if span.size >= 2:
        adjust_rate = float(np.sum(np.abs(np.diff(span)))) / ((span.size - 1) * dt)
    else:
        adjust_rate = 0.0

    success_rate = float(np.mean([r.success for r in trailing_window]))

    return MetricsVector(
        reaction_time=float(reaction),
        arriving_time=float(arriving),
        completing_time=float(completing),
        in_range_time=in_range,
        force_overshoot=overshoot,
        average_deviation=deviation,
        average_adjust_rate=adjust_rate,
        success_rate=success_rate,
    )


def probe_metrics(records: list[TrialRecord], probe_trial_index: int, window: int = 5) -> MetricsVector:
    """Metrics associated with a probe: the per-trial metrics averaged over
    the ``window`` trials ending at the probe's (1-based) trial index, with
    success_rate = successes / window."""
    if probe_trial_index < window:
        raise InsufficientDataError(
            f"probe at trial {probe_trial_index} has fewer than {window} preceding trials"
        )
    if probe_trial_index > len(records):
        raise InvalidInputError("probe index beyond available trials")
    chunk = records[probe_trial_index - window : probe_trial_index]
    rows = np.stack([trial_metrics(r).as_array() for r in chunk])
    return MetricsVector.from_array(rows.mean(axis=0))


class DegenerateVarianceWarning(UserWarning):
    """A metric had zero variance and was standardized to all zeros."""


@dataclass(frozen=True)
class Standardization:
    """Per-metric location/scale captured at standardization time."""

    mean: np.ndarray
    sd: np.ndarray
    degenerate: tuple[str, ...]

    def apply(self, values: np.ndarray) -> np.ndarray:
        sd = np.where(self.sd > 0, self.sd, 1.0)
        z = (values - self.mean) / sd
        return np.where(self.sd > 0, z, 0.0)


def zstandardize(vectors: list[MetricsVector]) -> tuple[list[MetricsVector], Standardization]:
    """Z-score each metric across a subject's vectors (sample sd, ddof=1).

    Zero-variance metrics are flagged and mapped to all zeros.
    """
    if len(vectors) < 2:
        raise InsufficientDataError("need at least 2 vectors to standardize")
    data = np.stack([v.as_array() for v in vectors])
    mean = data.mean(axis=0)
    sd = data.std(axis=0, ddof=1)
    degenerate = tuple(n for n, s in zip(METRIC_NAMES, sd) if s == 0)
    if degenerate:
        warnings.warn(
            f"zero-variance metrics standardized to zeros: {', '.join(degenerate)}",
            DegenerateVarianceWarning,
            stacklevel=2,
        )
    std = Standardization(mean=mean, sd=sd, degenerate=degenerate)
    z = std.apply(data)
    return [MetricsVector.from_array(row) for row in z], std


def resample_trace(times: np.ndarray, forces: np.ndarray, duration: float, rate: float = 1000.0) -> ForceTrace:
    """Linearly resample irregular (t, force) samples onto a uniform grid
    covering [0, duration). Values outside the sampled range hold the
    nearest endpoint; negatives clamp to zero."""
    times = np.asarray(times, dtype=float)
    forces = np.asarray(forces, dtype=float)
    if times.size == 0:
        raise InvalidInputError("no samples to resample")
    if np.any(np.diff(times) < 0):
        raise InvalidInputError("timestamps must be nondecreasing")
    dt = 1.0 / rate
    n = int(round(duration / dt))
    grid = np.arange(n) * dt
    values = np.interp(grid, times, forces)
    return ForceTrace(dt, np.maximum(values, 0.0))

"""Synthetic subjects: a closed-loop fingertip force-control model whose
loop period and minimum force step depend on a latent flow intensity.

Each control cycle the model observes the rendered disk height (force via
a display gain, plus measurement and visual noise), issues a corrective
command toward the target height (plus decision noise), quantizes the
command to the minimum modulation step, and applies it to the force (plus
output noise). Higher flow intensity shortens the loop period and shrinks
the modulation step, which is what couples flow to task performance.

Noise magnitudes are a calibrated constant tuple chosen by grid search
(scripts/calibrate_noise.py) so that 100-trial batches at a 0.055 N band
land near the reference success rates 0.61 (in-flow anchors) and 0.47
(out-flow anchors).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidInputError
from .task import (
    ForceTrace,
    ProbeSchedule,
    StaircaseState,
    TrialConfig,
    TrialRecord,
    evaluate_trial,
    measured_skill,
)

INTENSITY_MIN = 1.0
INTENSITY_MAX = 7.0

# Variants of the minimum-step rule for commands at or below the step:
# "deadband" issues no modulation (corrections finer than the minimum step
# are not executable), "signed" moves one step in the command's direction,
# "biased_up" moves one step upward regardless of sign. Calibration
# selects deadband as the default: the always-move variants add
# update-rate-proportional chatter that distorts the adjust-rate metric.
QUANTIZERS = ("deadband", "signed", "biased_up")


@dataclass(frozen=True)
class LoopParams:
    """Control-loop period (s) and minimum force modulation step (N)."""

    period: float
    step: float

    def __post_init__(self):
        if self.period <= 0 or self.step <= 0:
            raise InvalidInputError("loop period and step must be > 0")


@dataclass(frozen=True)
class SimParams:
    """Force-control model parameters.

    The display gain maps force to disk height; the model's command gain
    is its inverse, so the noise-free loop cancels the force error in one
    update. Sigmas are the standard deviations of the zero-mean Gaussian
    noises: output (added to the force after quantization), command
    (decision making), measurement (force sensing), and visual
    (height observation).
    """

    k_f: float = 1.0
    sigma_f: float = 0.0
    sigma_c: float = 0.008
    sigma_m: float = 0.008
    sigma_v: float = 0.008
    drift_rate_sd: float = 0.10
    drift_relax_s: float = 0.8
    drift_error_gain: float = 60.0
    drift_error_cap: float = 0.024
    lapse_rate_hz: float = 2.0
    lapse_mean_s: float = 0.7
    lapse_scale: float = 4.0
    inflow_anchor: LoopParams = LoopParams(0.15, 0.015)
    outflow_anchor: LoopParams = LoopParams(0.30, 0.030)
    quantizer: str = "deadband"

    def __post_init__(self):
        if self.k_f <= 0:
            raise InvalidInputError("k_f must be > 0")
        for s in (self.sigma_f, self.sigma_c, self.sigma_m, self.sigma_v, self.drift_rate_sd):
            if s < 0:
                raise InvalidInputError("sigmas must be >= 0")
        if self.drift_relax_s <= 0:
            raise InvalidInputError("drift_relax_s must be > 0")
        if self.drift_error_gain < 0:
            raise InvalidInputError("drift_error_gain must be >= 0")
        if self.drift_error_cap < 0:
            raise InvalidInputError("drift_error_cap must be >= 0")
        if self.lapse_rate_hz < 0 or self.lapse_mean_s <= 0 or self.lapse_scale < 1:
            raise InvalidInputError("invalid lapse parameters")
        if self.quantizer not in QUANTIZERS:
            raise InvalidInputError(f"quantizer must be one of {QUANTIZERS}")

    @property
    def k_h(self) -> float:
        return 1.0 / self.k_f


def flow_to_loop_params(intensity: float, params: SimParams = SimParams()) -> LoopParams:
    """Map a flow intensity in [1, 7] to loop parameters, linearly between
    the out-flow anchor (intensity 1) and the in-flow anchor (intensity 7)."""
    if not INTENSITY_MIN <= intensity <= INTENSITY_MAX:
        raise InvalidInputError(f"intensity {intensity} outside [1, 7]")
    frac = (intensity - INTENSITY_MIN) / (INTENSITY_MAX - INTENSITY_MIN)
    lo, hi = params.outflow_anchor, params.inflow_anchor
    return LoopParams(
        period=lo.period + (hi.period - lo.period) * frac,
        step=lo.step + (hi.step - lo.step) * frac,
    )


def _lapse_path(params: SimParams, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Attentional-lapse mask: True during brief lapses, with exponential
    sojourns (rate ``lapse_rate_hz`` into a lapse, mean lapse length
    ``lapse_mean_s``). While lapsing the motor drift runs amplified by
    ``lapse_scale``."""
    lapsing_mask = np.zeros(n, dtype=bool)
    t = 0.0
    lapsing = False
    while t < n * dt:
        if lapsing:
            stay = rng.exponential(params.lapse_mean_s)
            i0, i1 = int(t / dt), min(n, int((t + stay) / dt) + 1)
            lapsing_mask[i0:i1] = True
        else:
            stay = rng.exponential(1.0 / params.lapse_rate_hz)
        t += stay
        lapsing = not lapsing
    return lapsing_mask


def _quantize(command: float, step: float, kind: str) -> float:
    if abs(command) > step:
        return float(np.trunc(command / step)) * step
    if kind == "deadband":
        return 0.0
    if kind == "biased_up":
        return step
    return float(np.sign(command)) * step


def simulate_trial(
    params: SimParams,
    loop: LoopParams,
    config: TrialConfig,
    seed: int | np.random.Generator = 0,
    dt: float = 0.001,
) -> ForceTrace:
    """Run the control loop over one trial and render the force at ``dt``.

    Force starts at zero; the first update fires one loop period after
    trial onset, so the model's reaction time equals the loop period. Per
    update the draw order is measurement, visual, command, output noise.
    Between updates the force wanders with a smooth motor drift whose
    velocity is a mean-reverting process (stationary sd ``drift_rate_sd``
    N/s, relaxation ``drift_relax_s``), amplified by the force error at
    the last update (factor 1 + drift_error_gain * min(|F - target|,
    drift_error_cap): stabilization is best on target); the next update
    observes and corrects the drifted force. With drift_rate_sd 0 the
    force holds constant between updates.
    """
    if loop.period < dt:
        raise InvalidInputError("loop period must be >= trace dt")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(round(config.trial_duration / dt))
    samples = np.zeros(n)
    target_height = params.k_h * config.target_force

    # The drift and lapse processes are exogenous: draw them up front.
    if params.drift_rate_sd > 0:
        decay = float(np.exp(-dt / params.drift_relax_s))
        innovation = params.drift_rate_sd * np.sqrt(1 - decay**2)
        v0 = params.drift_rate_sd * rng.normal()
        shocks = rng.normal(0.0, innovation, size=n)
        velocity = lfilter([1.0], [1.0, -decay], shocks) + v0 * decay ** np.arange(1, n + 1)
        if params.lapse_rate_hz > 0:
            lapsing = _lapse_path(params, n, dt, rng)
            velocity = np.where(lapsing, params.lapse_scale * velocity, velocity)
    else:
        velocity = None

    force = 0.0
    k = 1
    idx = int(np.ceil(k * loop.period / dt - 1e-9))
    while idx < n:
        w_m = rng.normal(0.0, params.sigma_m)
        w_v = rng.normal(0.0, params.sigma_v)
        w_c = rng.normal(0.0, params.sigma_c)
        w_f = rng.normal(0.0, params.sigma_f)
        height = params.k_h * (force + w_m) + w_v
        command = params.k_f * (target_height - height) + w_c
        force = max(0.0, force + _quantize(command, loop.step, params.quantizer) + w_f)
        k += 1
        next_idx = min(n, int(np.ceil(k * loop.period / dt - 1e-9)))
        if velocity is not None:
            gain = 1.0 + params.drift_error_gain * min(
                abs(force - config.target_force), params.drift_error_cap
            )
            path = force + np.cumsum(velocity[idx:next_idx]) * dt * gain
            if path.size and path.min() < 0:
                # A finger cannot pull: clamp stepwise (rare, slow path).
                for i, v in enumerate(velocity[idx:next_idx]):
                    force = max(0.0, force + v * dt * gain)
                    samples[idx + i] = force
            else:
                samples[idx:next_idx] = path
                force = float(path[-1]) if path.size else force
        else:
            samples[idx:next_idx] = force
        idx = next_idx
    return ForceTrace(dt, samples)


@dataclass(frozen=True, eq=False)
class FlowProcess:
    """Ground-truth per-trial flow intensities in [1, 7]."""

    values: np.ndarray
    kind: str
    params: dict
    seed: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.size and (values.min() < INTENSITY_MIN or values.max() > INTENSITY_MAX):
            raise InvalidInputError("flow values must lie in [1, 7]")


def gen_flow_process(
    kind: str,
    n_trials: int,
    seed: int = 0,
    *,
    mean: float = 4.0,
    sd: float = 1.2,
    relaxation_s: float = 20.0,
    components: tuple[tuple[float, float], ...] = ((1.5, 20.0),),
    noise_sd: float = 0.3,
    trial_period_s: float = 3.0,
) -> FlowProcess:
    """Generate a per-trial flow intensity series, clamped to [1, 7].

    ``ou``: mean-reverting AR(1) toward ``mean`` with stationary sd ``sd``
    and relaxation time ``relaxation_s``. ``sinusoid-mixture``: ``mean``
    plus (amplitude, period_s) sinusoids with random phases plus Gaussian
    noise. Time advances ``trial_period_s`` per trial.
    """
    if n_trials < 1:
        raise InvalidInputError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "ou":
        phi = float(np.exp(-trial_period_s / relaxation_s))
        innov = sd * np.sqrt(1 - phi**2)
        x = np.empty(n_trials)
        x[0] = mean + sd * rng.normal()
        for i in range(1, n_trials):
            x[i] = mean + phi * (x[i - 1] - mean) + innov * rng.normal()
        params = {"mean": mean, "sd": sd, "relaxation_s": relaxation_s}
    elif kind == "sinusoid-mixture":
        t = np.arange(n_trials) * trial_period_s
        x = np.full(n_trials, float(mean))
        for amplitude, period_s in components:
            phase = rng.uniform(0, 2 * np.pi)
            x = x + amplitude * np.sin(2 * np.pi * t / period_s + phase)
        x = x + noise_sd * rng.normal(size=n_trials)
        params = {"mean": mean, "components": list(components), "noise_sd": noise_sd}
    else:
        raise InvalidInputError(f"unknown flow process kind {kind!r}")
    params["trial_period_s"] = trial_period_s
    return FlowProcess(np.clip(x, INTENSITY_MIN, INTENSITY_MAX), kind, params, seed)


@dataclass(frozen=True)
class SyntheticProbe:
    """A synthesized self-report: three 1..7 responses at one trial."""

    session: int
    trial_index: int
    responses: tuple[int, int, int]

    @property
    def intensity(self) -> float:
        return float(np.mean(self.responses))


@dataclass
class SubjectData:
    """Everything simulate_subject produces for one synthetic subject."""

    config: TrialConfig
    staircase: StaircaseState
    skill: float
    sessions: list[list[TrialRecord]]
    probes: list[SyntheticProbe]
    flow_truth: np.ndarray
    seed: int


def synth_responses(intensity: float, noise_sd: float, rng: np.random.Generator) -> tuple[int, int, int]:
    """Three 7-point responses: intensity + Gaussian noise, rounded and
    clamped to the response grid."""
    vals = np.clip(np.round(intensity + rng.normal(0.0, noise_sd, size=3)), 1, 7)
    return tuple(int(v) for v in vals)


def simulate_subject(
    params: SimParams,
    config: TrialConfig,
    schedule: ProbeSchedule,
    flow: FlowProcess,
    report_noise_sd: float = 0.5,
    seed: int = 0,
    *,
    skill_trials: int = 50,
    skill_intensity: float = 4.0,
    initial_band: float = 0.2,
    k1: float = 0.5,
    k2: float = 0.05,
    dt: float = 0.001,
    probe_window: int = 5,
) -> SubjectData:
    """Simulate one subject through skill measurement plus the main sessions.

    Skill is measured with the staircase at a neutral flow intensity; the
    main sessions run at that fixed band width, with loop parameters driven
    trial-by-trial by the flow process. Scheduled probes are answered from
    the mean true intensity over the probe's trailing ``probe_window``
    trials (the question asks about the last few trials) plus report noise.
    """
    n_sessions = len(schedule.sessions)
    total = flow.values.size
    if total % n_sessions:
        raise InvalidInputError(
            f"flow length {total} does not divide into {n_sessions} sessions"
        )
    trials_per_session = total // n_sessions
    max_probe = max((max(s) for s in schedule.sessions if s), default=0)
    if max_probe > trials_per_session:
        raise InvalidInputError("probe schedule exceeds the session trial count")
    rng = np.random.default_rng(seed)

    stair = StaircaseState(current_band=initial_band, k1=k1, k2=k2)
    neutral = flow_to_loop_params(skill_intensity, params)
    trials_run = 0
    # Run at least skill_trials, continuing (bounded) until enough
    # difficulty reversals exist to estimate the skill.
    while trials_run < skill_trials or (
        len(stair.transition_points) < 10 and trials_run < 2 * skill_trials
    ):
        cfg = replace(config, band_width=stair.current_band)
        trace = simulate_trial(params, neutral, cfg, rng, dt=dt)
        stair.update(evaluate_trial(trace, cfg))
        trials_run += 1
    skill = measured_skill(stair)

    main_cfg = replace(config, band_width=skill)
    sessions: list[list[TrialRecord]] = []
    probes: list[SyntheticProbe] = []
    flat_index = 0
    for s in range(1, n_sessions + 1):
        session_trials: list[TrialRecord] = []
        for j in range(1, trials_per_session + 1):
            intensity = float(flow.values[flat_index])
            loop = flow_to_loop_params(intensity, params)
            trace = simulate_trial(params, loop, main_cfg, rng, dt=dt)
            session_trials.append(evaluate_trial(trace, main_cfg))
            if j in schedule.probes_in(s):
                lo = max(flat_index - probe_window + 1, flat_index - j + 1)
                felt = float(np.mean(flow.values[lo : flat_index + 1]))
                responses = synth_responses(felt, report_noise_sd, rng)
                probes.append(SyntheticProbe(session=s, trial_index=j, responses=responses))
            flat_index += 1
        sessions.append(session_trials)

    return SubjectData(
        config=main_cfg,
        staircase=stair,
        skill=skill,
        sessions=sessions,
        probes=probes,
        flow_truth=flow.values[: flat_index].copy(),
        seed=seed,
    )

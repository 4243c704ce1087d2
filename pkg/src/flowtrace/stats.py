"""Statistical validation: median split, paired tests, correlation, FDR,
label-randomization significance tests for the decoder, subject QC,
Welch power spectral density, and the 70%-power timescale."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as t_dist

from . import decode
from .decode import FlowProbe, enumerate_subsets, loocv_errors_for_labels, subset_operators
from .errors import (
    DegenerateDataError,
    DegenerateFitError,
    InsufficientDataError,
    InvalidInputError,
)
from .metrics import MetricsVector


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    effect_size: float
    df: int


def median_split(intensities: np.ndarray) -> np.ndarray:
    """Boolean in-flow labels: strictly above the median is in-flow."""
    intensities = np.asarray(intensities, dtype=float)
    if intensities.size < 2:
        raise InsufficientDataError("need >= 2 probes to split")
    med = float(np.median(intensities))
    labels = intensities > med
    if not labels.any():
        warnings.warn("degenerate median split: no probe above the median", UserWarning, stacklevel=2)
    return labels


def paired_t(x: np.ndarray, y: np.ndarray) -> TestResult:
    """Two-tailed paired-samples t-test with Cohen's d = mean(d)/sd(d)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InvalidInputError("x and y must be equal-length with n >= 2")
    diff = x - y
    sd = diff.std(ddof=1)
    if sd == 0:
        raise DegenerateDataError("zero-variance differences")
    n = diff.size
    t = float(diff.mean() / (sd / np.sqrt(n)))
    p = 2 * float(t_dist.sf(abs(t), n - 1))
    return TestResult(statistic=t, p_value=p, effect_size=float(diff.mean() / sd), df=n - 1)


def pearson(x: np.ndarray, y: np.ndarray) -> TestResult:
    """Pearson correlation with two-tailed p via t = r*sqrt((n-2)/(1-r^2))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise InvalidInputError("x and y must be equal-length with n >= 3")
    if x.std() == 0 or y.std() == 0:
        raise DegenerateDataError("zero-variance input")
    r = float(np.corrcoef(x, y)[0, 1])
    n = x.size
    if abs(r) >= 1.0:
        return TestResult(statistic=np.inf if r > 0 else -np.inf, p_value=0.0, effect_size=r, df=n - 2)
    t = r * np.sqrt((n - 2) / (1 - r**2))
    p = 2 * float(t_dist.sf(abs(t), n - 2))
    return TestResult(statistic=float(t), p_value=p, effect_size=r, df=n - 2)


def bh_fdr(p_values: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, order preserved."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)):
        raise InvalidInputError("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * n / np.arange(1, n + 1)
    adjusted = np.minimum.accumulate(ranked[::-1])[::-1]
    out = np.empty(n)
    out[order] = np.minimum(adjusted, 1.0)
    return out


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    true_nrmse: float
    replicate_nrmse: np.ndarray
    n_dropped: int
    degenerate: bool  # every replicate tied the true error exactly


def _replicate_test(
    probes: list[FlowProbe],
    metrics: list[MetricsVector],
    labels: np.ndarray,
    max_size: int,
    fixed_subset: tuple[str, ...] | None,
) -> SignificanceResult:
    """Shared replicate machinery: LOOCV error of the true labels versus a
    matrix of replicate label sets.

    By default the full pipeline, including subset selection, is re-run per
    replicate so the null comparison is exchangeable with the true run;
    passing ``fixed_subset`` restricts every run to that subset instead.
    """
    y = decode.intensities(probes)
    if fixed_subset is not None:
        subsets = [tuple(fixed_subset)]
    else:
        subsets = [s for s in enumerate_subsets(max_size) if len(probes) >= len(s) + 3]
    ops = subset_operators(metrics, subsets)

    denom_true = np.sum(y**2)
    if denom_true == 0:
        raise ZeroDivisionError("all-zero intensities")
    true_errors = loocv_errors_for_labels(ops, y[:, None])[:, 0]
    if np.all(np.isnan(true_errors)):
        raise DegenerateFitError("all subsets degenerate on the true labels")
    true_nrmse = float(np.nanmin(true_errors))

    rep_errors = loocv_errors_for_labels(ops, labels)
    rep_best = np.nanmin(rep_errors, axis=0)
    dropped = int(np.sum(~np.isfinite(rep_best)))
    rep_best = rep_best[np.isfinite(rep_best)]
    if rep_best.size == 0:
        raise DegenerateDataError("every replicate degenerate")

    # NRMSE is dimensionless and O(1); differences below 1e-12 are rounding.
    if np.allclose(rep_best, true_nrmse, rtol=1e-9, atol=1e-12):
        warnings.warn("degenerate significance test: all replicates tie the true error",
                      UserWarning, stacklevel=3)
        return SignificanceResult(1.0, true_nrmse, rep_best, dropped, True)
    p = float(np.mean(rep_best < true_nrmse))
    return SignificanceResult(p, true_nrmse, rep_best, dropped, False)


def random_test(
    probes: list[FlowProbe],
    metrics: list[MetricsVector],
    n: int = 1000,
    seed: int = 0,
    max_size: int = 4,
    fixed_subset: tuple[str, ...] | None = None,
    grid: bool = False,
    range_pad: float = 2.0,
) -> SignificanceResult:
    """Decoding error versus ``n`` random label sets drawn from the range
    of the true reports (continuous by default; ``grid`` restricts draws to
    the 1/3-step report grid). p = fraction of replicates with lower error.

    The sampling interval is the observed range widened by
    ``range_pad * range / (n_probes - 1)`` on each side: the observed range
    underestimates the source support, which would otherwise shrink the
    null labels' variance and make the test conservative. The default pad
    centers the null rejection rate at the nominal 0.05 level (see the
    calibration acceptance check).
    """
    y = decode.intensities(probes)
    rng = np.random.default_rng(seed)
    lo, hi = float(y.min()), float(y.max())
    pad = range_pad * (hi - lo) / max(y.size - 1, 1)
    labels = rng.uniform(lo - pad, hi + pad, size=(n, y.size)).T
    if grid:
        labels = np.clip(np.round(labels * 3) / 3, 1.0, 7.0)
    return _replicate_test(probes, metrics, labels, max_size, fixed_subset)


def permutation_test(
    probes: list[FlowProbe],
    metrics: list[MetricsVector],
    n: int = 1000,
    seed: int = 0,
    max_size: int = 4,
    fixed_subset: tuple[str, ...] | None = None,
) -> SignificanceResult:
    """Decoding error versus ``n`` random permutations of the true labels."""
    y = decode.intensities(probes)
    rng = np.random.default_rng(seed)
    labels = np.stack([rng.permutation(y) for _ in range(n)]).T
    return _replicate_test(probes, metrics, labels, max_size, fixed_subset)


@dataclass(frozen=True)
class QcResult:
    passed: bool
    reasons: tuple[str, ...]
    success_rate: float
    intensity_range: float


def qc_subject(successes: np.ndarray, intensities: np.ndarray) -> QcResult:
    """Exclude subjects whose task was too easy (success rate above 0.9) or
    whose reports are too narrow to decode (intensity range below 1)."""
    successes = np.asarray(successes, dtype=float)
    intensities = np.asarray(intensities, dtype=float)
    if successes.size == 0 or intensities.size == 0:
        raise InvalidInputError("need trials and probes for QC")
    rate = float(successes.mean())
    span = float(intensities.max() - intensities.min())
    reasons = []
    if rate > 0.9:
        reasons.append(f"success rate {rate:.2f} exceeds 0.9")
    if span < 1.0:
        reasons.append(f"intensity range {span:.2f} below 1")
    return QcResult(not reasons, tuple(reasons), rate, span)


@dataclass(frozen=True)
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    segment_length: int
    overlap: float
    window: str

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


def _window(kind: str, m: int) -> np.ndarray:
    n = np.arange(m)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / m)
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / m)
    if kind == "boxcar":
        return np.ones(m)
    raise InvalidInputError(f"unknown window {kind!r}")


def welch_psd(
    series: np.ndarray,
    fs: float,
    segment_length: int | None = None,
    overlap: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """One-sided Welch PSD of the mean-removed series.

    Averages windowed periodograms of overlapping segments; densities are
    scaled so that the integral over frequency matches the series variance
    (within window correction). Default segment length is the largest power
    of two at most N/4, floored at 8.
    """
    x = np.asarray(series, dtype=float)
    if fs <= 0:
        raise InvalidInputError("fs must be > 0")
    if not 0 <= overlap < 1:
        raise InvalidInputError("overlap must be in [0, 1)")
    if segment_length is None:
        segment_length = max(8, 2 ** int(np.floor(np.log2(max(x.size // 4, 1)))))
        segment_length = min(segment_length, x.size)
    if segment_length < 8:
        raise InvalidInputError("segment_length must be >= 8")
    if x.size < segment_length:
        raise InsufficientDataError(
            f"series length {x.size} shorter than segment length {segment_length}"
        )

    x = x - x.mean()
    w = _window(window, segment_length)
    scale = 1.0 / (fs * np.sum(w**2))
    step = segment_length - int(np.floor(overlap * segment_length))
    starts = range(0, x.size - segment_length + 1, step)
    acc = np.zeros(segment_length // 2 + 1)
    for s in starts:
        spec = np.fft.rfft(x[s : s + segment_length] * w)
        acc += np.abs(spec) ** 2
    pxx = acc * (scale / len(starts))
    pxx[1:] *= 2
    if segment_length % 2 == 0:
        pxx[-1] /= 2
    freqs = np.fft.rfftfreq(segment_length, d=1.0 / fs)
    return PsdEstimate(freqs, pxx, segment_length, overlap, window)


def power_timescale(psd: PsdEstimate, fraction: float = 0.7) -> float:
    """Timescale T such that frequencies at 1/T and faster carry
    ``fraction`` of the non-DC power.

    Each bin's mass is spread over the interval it represents (bin j covers
    (f_j - df, f_j]); accumulating from the Nyquist end, the threshold
    frequency interpolates inside the bin where the fraction is crossed.
    For an ideal flat spectrum this gives the exact geometric point
    ((1 - fraction) * Nyquist).
    """
    if not 0 < fraction <= 1:
        raise InvalidInputError("fraction must be in (0, 1]")
    power = np.asarray(psd.power, dtype=float)[1:]
    freqs = np.asarray(psd.frequencies, dtype=float)[1:]
    total = float(power.sum())
    if total <= 0 or not np.isfinite(total):
        raise DegenerateDataError("no non-DC power: timescale undefined")
    target = fraction * total
    cum = 0.0
    for j in range(power.size - 1, -1, -1):
        if cum + power[j] >= target - 1e-12 * total:
            excess = target - cum
            frac_into_bin = excess / power[j] if power[j] > 0 else 1.0
            f_star = freqs[j] - psd.df * min(frac_into_bin, 1.0)
            if f_star <= 0:
                raise DegenerateDataError("power fraction reaches into the DC bin")
            return float(1.0 / f_star)
        cum += power[j]
    raise DegenerateDataError("power fraction reaches into the DC bin")

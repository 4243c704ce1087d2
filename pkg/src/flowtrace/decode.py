"""Linear flow decoder: metric-subset selection, leave-one-out
cross-validation, and per-trial flow reconstruction.

The decoder is ordinary least squares from z-standardized metric columns
(at most four of the eight) plus an intercept onto the self-reported flow
intensity. The subset is chosen by exhaustive search over all 162
candidate subsets, minimizing leave-one-out NRMSE.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateDataError, DegenerateFitError, InsufficientDataError, InvalidInputError
from .metrics import METRIC_NAMES, MetricsVector
from .task import TrialRecord

# Leverage at or above this marks a LOOCV fold degenerate: deleting the
# point makes its prediction unconstrained.
_LEVERAGE_LIMIT = 1.0 - 1e-10


@dataclass(frozen=True)
class FlowProbe:
    """One self-report: three 7-point responses at a trial within a session."""

    probe_index: int
    trial_index: int
    responses: tuple[int, int, int]
    session: int = 1

    def __post_init__(self):
        if len(self.responses) != 3 or any(not 1 <= r <= 7 for r in self.responses):
            raise InvalidInputError("responses must be three integers in 1..7")

    @property
    def intensity(self) -> float:
        return float(np.mean(self.responses))


@dataclass(frozen=True)
class DecoderModel:
    """Selected metric subset, weights on standardized metrics, intercept,
    and the standardization parameters captured at fit time."""

    subset: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    metric_mean: np.ndarray
    metric_sd: np.ndarray


def intensities(probes: list[FlowProbe]) -> np.ndarray:
    return np.array([p.intensity for p in probes], dtype=float)


def metric_matrix(metrics: list[MetricsVector], subset: tuple[str, ...] | None = None) -> np.ndarray:
    cols = METRIC_NAMES if subset is None else subset
    idx = [METRIC_NAMES.index(name) for name in cols]
    return np.stack([v.as_array()[idx] for v in metrics])


def _validate_subset(subset: tuple[str, ...]):
    if not 1 <= len(subset) <= len(METRIC_NAMES):
        raise InvalidInputError("subset must contain 1..8 metrics")
    unknown = [n for n in subset if n not in METRIC_NAMES]
    if unknown:
        raise InvalidInputError(f"unknown metrics: {unknown}")
    if len(set(subset)) != len(subset):
        raise InvalidInputError("subset contains duplicates")


def fit(probes: list[FlowProbe], metrics: list[MetricsVector], subset: tuple[str, ...]) -> DecoderModel:
    """Least-squares fit of reported intensity on the z-standardized subset
    columns plus an intercept."""
    _validate_subset(subset)
    if len(probes) != len(metrics):
        raise InvalidInputError("probes and metrics must be matched")
    k = len(subset)
    if len(probes) < k + 2:
        raise InsufficientDataError(f"need >= {k + 2} probes for a {k}-metric fit")
    raw = metric_matrix(metrics, subset)
    mean = raw.mean(axis=0)
    sd = raw.std(axis=0, ddof=1)
    if np.any(sd == 0):
        flat = [n for n, s in zip(subset, sd) if s == 0]
        raise DegenerateFitError(f"constant metric column(s): {', '.join(flat)}")
    z = (raw - mean) / sd
    design = np.column_stack([z, np.ones(len(probes))])
    y = intensities(probes)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateFitError("rank-deficient design matrix")
    return DecoderModel(
        subset=tuple(subset),
        weights=coef[:-1].copy(),
        intercept=float(coef[-1]),
        metric_mean=mean,
        metric_sd=sd,
    )


def predict(model: DecoderModel, metrics: MetricsVector) -> float:
    """Predicted intensity; unclamped (display-side clamping is cosmetic)."""
    idx = [METRIC_NAMES.index(n) for n in model.subset]
    z = (metrics.as_array()[idx] - model.metric_mean) / model.metric_sd
    return float(z @ model.weights + model.intercept)


def nrmse(true: np.ndarray, predicted: np.ndarray) -> float:
    """Root-mean-square error normalized by the root sum of squares of the
    true values: sqrt(sum((pred - true)^2) / sum(true^2))."""
    true = np.asarray(true, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if true.size == 0 or true.shape != predicted.shape:
        raise InvalidInputError("true and predicted must be equal-length, non-empty")
    denom = float(np.sum(true**2))
    if denom == 0:
        raise ZeroDivisionError("all-zero true values")
    return float(np.sqrt(np.sum((predicted - true) ** 2) / denom))


@dataclass(frozen=True)
class LoocvResult:
    predictions: np.ndarray
    nrmse: float


def loocv(probes: list[FlowProbe], metrics: list[MetricsVector], subset: tuple[str, ...]) -> LoocvResult:
    """Leave-one-out CV: each probe predicted by a model fit on the others."""
    _validate_subset(subset)
    n = len(probes)
    if n < len(subset) + 2:
        raise InsufficientDataError("too few probes for leave-one-out")
    preds = np.empty(n)
    for k in range(n):
        rest = [i for i in range(n) if i != k]
        try:
            model = fit([probes[i] for i in rest], [metrics[i] for i in rest], subset)
        except (DegenerateFitError, InsufficientDataError) as exc:
            raise DegenerateFitError(f"fold {k} degenerate: {exc}") from exc
        preds[k] = predict(model, metrics[k])
    return LoocvResult(preds, nrmse(intensities(probes), preds))


def _loocv_operator(raw_columns: np.ndarray) -> np.ndarray:
    """Matrix M such that M @ y gives LOOCV residuals of OLS-with-intercept
    on these columns, via the deleted-residual identity
    e_k = (y_k - yhat_k) / (1 - h_kk).

    Standardizing columns is an affine reparametrization, so predictions
    (and this operator) match per-fold standardized fits exactly.
    """
    n = raw_columns.shape[0]
    design = np.column_stack([raw_columns, np.ones(n)])
    gram = design.T @ design
    # Solve instead of inverting; raises LinAlgError when rank deficient.
    hat = design @ np.linalg.solve(gram, design.T)
    leverage = np.diag(hat)
    if np.any(leverage >= _LEVERAGE_LIMIT):
        raise DegenerateFitError("a fold has leverage 1 (deleted fit unconstrained)")
    scale = 1.0 / (1.0 - leverage)
    return scale[:, None] * (np.eye(n) - hat)


def loocv_errors_for_labels(
    operators: list[np.ndarray | None], labels: np.ndarray
) -> np.ndarray:
    """NRMSE of every subset's LOOCV predictions for each label column.

    ``labels`` is (n_probes, n_label_sets); returns (n_subsets,
    n_label_sets) with NaN rows for degenerate subsets.
    """
    denom = np.sqrt(np.sum(labels**2, axis=0))
    out = np.full((len(operators), labels.shape[1]), np.nan)
    for i, op in enumerate(operators):
        if op is None:
            continue
        residuals = op @ labels
        out[i] = np.sqrt(np.sum(residuals**2, axis=0)) / denom
    return out


def enumerate_subsets(max_size: int = 4) -> list[tuple[str, ...]]:
    """All metric subsets of size 1..max_size in (size, lexicographic-by-
    canonical-order) order; 162 subsets for max_size 4."""
    out: list[tuple[str, ...]] = []
    for size in range(1, max_size + 1):
        out.extend(combinations(METRIC_NAMES, size))
    return out


def subset_operators(
    metrics: list[MetricsVector], subsets: list[tuple[str, ...]]
) -> list[np.ndarray | None]:
    """LOOCV operators per subset; None where the subset is degenerate."""
    full = metric_matrix(metrics)
    ops: list[np.ndarray | None] = []
    for subset in subsets:
        idx = [METRIC_NAMES.index(n) for n in subset]
        cols = full[:, idx]
        if np.any(cols.std(axis=0) == 0):
            ops.append(None)
            continue
        try:
            ops.append(_loocv_operator(cols))
        except (np.linalg.LinAlgError, DegenerateFitError):
            ops.append(None)
    return ops


@dataclass(frozen=True)
class SelectionResult:
    subset: tuple[str, ...]
    model: DecoderModel
    loocv: LoocvResult
    n_candidates: int
    n_degenerate: int


def select_subset(
    probes: list[FlowProbe], metrics: list[MetricsVector], max_size: int = 4
) -> SelectionResult:
    """Exhaustive subset search minimizing LOOCV NRMSE; ties break toward
    the smaller then lexicographically earlier subset. The returned model
    is refit on all probes with the winning subset."""
    if len(probes) != len(metrics):
        raise InvalidInputError("probes and metrics must be matched")
    subsets = enumerate_subsets(max_size)
    y = intensities(probes)
    if np.sum(y**2) == 0:
        raise ZeroDivisionError("all-zero intensities")
    # Each fold fits on n-1 probes and needs |subset|+2 of them.
    usable = [s for s in subsets if len(probes) >= len(s) + 3]
    if not usable:
        raise InsufficientDataError("too few probes for any subset")
    ops = subset_operators(metrics, usable)
    errors = loocv_errors_for_labels(ops, y[:, None])[:, 0]
    if np.all(np.isnan(errors)):
        raise DegenerateFitError("all candidate subsets degenerate")
    best = int(np.nanargmin(errors))
    subset = usable[best]
    # Deleted residual e_k = y_k - yhat_k^(-k), so the held-out prediction
    # is y - e.
    preds = y - ops[best] @ y
    result = LoocvResult(preds, float(errors[best]))
    model = fit(probes, metrics, subset)
    return SelectionResult(
        subset=subset,
        model=model,
        loocv=result,
        n_candidates=len(usable),
        n_degenerate=int(np.sum([op is None for op in ops])),
    )


def relative_contributions(model: DecoderModel) -> dict[str, float]:
    """Share of each selected metric: |weight| / sum of |weights|."""
    total = float(np.sum(np.abs(model.weights)))
    if total == 0:
        raise DegenerateDataError("all-zero weights: contributions undefined")
    return {n: float(abs(w)) / total for n, w in zip(model.subset, model.weights)}


def decode_timeseries(
    model: DecoderModel, trials: list[TrialRecord], window: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial decoded intensity from metrics over a trailing window.

    Returns (trial_numbers, intensities) for 1-based trials window..N; the
    value at a probe's trial equals predicting that probe's window metrics.
    """
    from .metrics import probe_metrics

    if len(trials) < window:
        raise InsufficientDataError(f"need >= {window} trials")
    numbers = np.arange(window, len(trials) + 1)
    values = np.array(
        [predict(model, probe_metrics(trials, int(k), window)) for k in numbers]
    )
    return numbers, values

"""Net Benefit, paired model comparison, calibration, and recalibration.

Net Benefit at threshold t counts true positives net of false positives
weighted by the odds of t, per sample:  NB = TP/n - FP/n * t/(1-t).
It is the sole performance metric used throughout; treat-none has NB 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import ConfigError, DataError, RecalibrationError
from .model_core import TargetThreshold

__all__ = [
    "NetBenefitReport",
    "PairedDelta",
    "CalibrationCurve",
    "MiscalibrationSpec",
    "RecalibrationResult",
    "net_benefit",
    "paired_delta",
    "calibration_curve",
    "logistic_recalibrate",
    "logit_affine",
    "perturb_calibration",
]

MISCALIBRATION_KINDS = ("overestimation", "underestimation", "overfitting", "underfitting")
MISCALIBRATION_DEGREES = ("mild", "severe")
_SHIFT_DELTA = {"mild": 0.5, "severe": 1.5}
_OVERFIT_SLOPE = {"mild": 1.5, "severe": 3.0}


@dataclass(frozen=True)
class NetBenefitReport:
    t: TargetThreshold
    tp_count: int
    fp_count: int
    n: int
    net_benefit: float


@dataclass(frozen=True)
class PairedDelta:
    """Per-split Net Benefit differences with the paired standard error."""

    deltas: np.ndarray
    mean_delta: float
    se_delta: float

    @property
    def m(self) -> int:
        return self.deltas.shape[0]


@dataclass(frozen=True)
class CalibrationCurve:
    """Equal-width binned agreement between predicted and observed rates.

    Empty bins carry count 0 and NaN for both per-bin means.
    """

    bin_edges: np.ndarray
    mean_predicted: np.ndarray
    observed_fraction: np.ndarray
    counts: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0


@dataclass(frozen=True)
class MiscalibrationSpec:
    kind: str
    degree: str

    def __post_init__(self):
        if self.kind not in MISCALIBRATION_KINDS:
            raise ConfigError(f"kind must be one of {MISCALIBRATION_KINDS}, got {self.kind!r}")
        if self.degree not in MISCALIBRATION_DEGREES:
            raise ConfigError(f"degree must be one of {MISCALIBRATION_DEGREES}, got {self.degree!r}")


@dataclass(frozen=True)
class RecalibrationResult:
    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    probabilities: np.ndarray
    n_iterations: int


def _check_pred_outcome(predictions, outcomes):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    if p.size == 0:
        raise DataError("empty predictions")
    if p.shape != y.shape:
        raise DataError(f"{p.size} predictions but {y.size} outcomes")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("outcomes must be 0 or 1")
    return p, y


def net_benefit(predictions, outcomes, t: TargetThreshold | float) -> NetBenefitReport:
    """Confusion counts at threshold t and the resulting Net Benefit."""
    if not isinstance(t, TargetThreshold):
        t = TargetThreshold(float(t))
    p, y = _check_pred_outcome(predictions, outcomes)
    positive = p >= t.t
    tp = int(np.count_nonzero(positive & (y == 1.0)))
    fp = int(np.count_nonzero(positive & (y == 0.0)))
    n = p.shape[0]
    nb = tp / n - fp / n * (t.t / (1.0 - t.t))
    return NetBenefitReport(t=t, tp_count=tp, fp_count=fp, n=n, net_benefit=nb)


def paired_delta(nb_a, nb_b) -> PairedDelta:
    """Split-wise differences a - b with SE sqrt(sum (D - mean)^2 / (m (m-1))).

    Both models must have been scored on the same m >= 2 splits; the
    pairing is what keeps the standard error honest.
    """
    a = np.asarray(nb_a, dtype=np.float64).ravel()
    b = np.asarray(nb_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError("paired Net Benefit vectors must have equal length")
    m = a.shape[0]
    if m < 2:
        raise DataError("need at least two splits for a paired standard error")
    d = a - b
    mean = float(d.mean())
    se = math.sqrt(float(np.sum((d - mean) ** 2)) / (m * (m - 1)))
    return PairedDelta(deltas=d, mean_delta=mean, se_delta=se)


def calibration_curve(predictions, outcomes, n_bins: int = 10) -> CalibrationCurve:
    """Observed event fraction vs mean prediction over equal-width bins on [0, 1]."""
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    p, y = _check_pred_outcome(predictions, outcomes)
    if np.any((p < 0.0) | (p > 1.0)):
        raise DataError("predictions must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum(np.digitize(p, edges[1:-1], right=False), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sum_p = np.bincount(idx, weights=p, minlength=n_bins)
    sum_y = np.bincount(idx, weights=y, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(counts > 0, sum_p / counts, np.nan)
        obs_frac = np.where(counts > 0, sum_y / counts, np.nan)
    return CalibrationCurve(
        bin_edges=edges,
        mean_predicted=mean_pred,
        observed_fraction=obs_frac,
        counts=counts,
    )


def logistic_recalibrate(
    raw_probabilities,
    outcomes,
    max_iterations: int = 100,
    grad_tol: float = 1e-8,
) -> RecalibrationResult:
    """Fit logit(p') = a + b logit(p) by Newton-Raphson maximum likelihood.

    Raises RecalibrationError on separation (coefficients running away)
    or failure to reach the gradient tolerance within ``max_iterations``.
    """
    p, y = _check_pred_outcome(raw_probabilities, outcomes)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DataError("raw probabilities must lie strictly in (0, 1)")
    z = logit(p)
    design = np.column_stack([np.ones_like(z), z])
    theta = np.array([0.0, 1.0])
    for iteration in range(1, max_iterations + 1):
        fitted = expit(design @ theta)
        grad = design.T @ (y - fitted)
        if np.max(np.abs(grad)) < grad_tol:
            weights = fitted * (1.0 - fitted)
            hessian = design.T @ (design * weights[:, None])
            try:
                cov = np.linalg.inv(hessian)
            except np.linalg.LinAlgError as exc:
                raise RecalibrationError("singular information matrix at the optimum") from exc
            se = np.sqrt(np.diag(cov))
            return RecalibrationResult(
                intercept=float(theta[0]),
                slope=float(theta[1]),
                se_intercept=float(se[0]),
                se_slope=float(se[1]),
                probabilities=expit(design @ theta),
                n_iterations=iteration,
            )
        weights = fitted * (1.0 - fitted)
        hessian = design.T @ (design * weights[:, None])
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError as exc:
            raise RecalibrationError(
                "singular Newton system; outcomes may be separated"
            ) from exc
        theta = theta + step
        # a logit shift or slope beyond 15 only arises under (quasi-)separation,
        # where the likelihood saturates before the gradient test can fire
        if np.max(np.abs(theta)) > 15.0:
            raise RecalibrationError(
                "recalibration coefficients diverged; outcomes appear separated"
            )
    raise RecalibrationError(f"no convergence after {max_iterations} Newton iterations")


def logit_affine(probabilities, shift: float = 0.0, slope: float = 1.0) -> np.ndarray:
    """Map each probability through z -> pivot + slope (z - pivot) + shift in logit space.

    The pivot is the logit of the mean probability, so a pure slope
    change crosses the identity at the average risk.
    """
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    if p.size == 0:
        raise DataError("empty probabilities")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DataError("probabilities must lie strictly in (0, 1)")
    z = logit(p)
    pivot = logit(float(p.mean()))
    return expit(pivot + slope * (z - pivot) + shift)


def perturb_calibration(probabilities, spec: MiscalibrationSpec) -> np.ndarray:
    """Apply a logit-affine miscalibration of the requested kind and degree.

    Over/underestimation shift every logit by +-delta (mild 0.5, severe
    1.5).  Over/underfitting rescale logits by gamma (overfitting 1.5 or
    3, underfitting the reciprocals) about the logit of the mean
    probability, so the curve pivots at the average risk.
    """
    if spec.kind == "overestimation":
        return logit_affine(probabilities, shift=_SHIFT_DELTA[spec.degree])
    if spec.kind == "underestimation":
        return logit_affine(probabilities, shift=-_SHIFT_DELTA[spec.degree])
    gamma = _OVERFIT_SLOPE[spec.degree]
    if spec.kind == "underfitting":
        gamma = 1.0 / gamma
    return logit_affine(probabilities, slope=gamma)

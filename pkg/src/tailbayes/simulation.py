"""Synthetic benchmark generators with true-probability oracles.

Three two-covariate binary studies:

* study 1: uniform covariates with p(y=1) = q x2 / (x1 + q x2); the
  optimal decision boundaries are straight lines through the origin
  whose slope depends on the threshold (linear but not parallel).
* study 2: class-conditional Gaussians with unequal diagonal
  covariances, giving quadratic optimal boundaries.
* study 3: a linear logistic model whose training data is corrupted by
  appending label-0 rows in the high-risk corner of the covariate
  space.

Each generator returns the dataset plus the true class-1 probability
per row so optimal classifiers and their Net Benefit can be computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .evaluation import NetBenefitReport
from .model_core import Dataset, TargetThreshold

__all__ = [
    "Sim1Config",
    "Sim2Config",
    "Sim3Config",
    "generate_sim1",
    "generate_sim2",
    "generate_sim3",
    "sim1_oracle_probability",
    "sim2_oracle_probability",
    "sim1_boundary_slope",
    "fitted_boundary_slope",
    "optimal_boundary",
    "optimal_nb",
    "boundary_points",
]


@dataclass(frozen=True)
class Sim1Config:
    """Uniform-covariate study; q controls class balance (q=1 gives prevalence 0.5)."""

    n: int
    q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not (self.q > 0.0):
            raise ConfigError("q must be positive")


@dataclass(frozen=True)
class Sim2Config:
    """Gaussian mixture study with unequal diagonal covariances."""

    n: int
    seed: int = 0
    prevalence: float = 0.5
    mean1: tuple[float, float] = (1.0, 0.0)
    var1: tuple[float, float] = (1.0, 2.0)
    mean0: tuple[float, float] = (0.0, 1.0)
    var0: tuple[float, float] = (2.0, 1.0)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not (0.0 < self.prevalence < 1.0):
            raise ConfigError("prevalence must lie in (0, 1)")
        if min(*self.var1, *self.var0) <= 0.0:
            raise ConfigError("variances must be positive")


@dataclass(frozen=True)
class Sim3Config:
    """Logistic data with a fraction psi of appended mislabelled rows.

    Contaminant covariates are drawn from N(1.5, 0.5^2) per coordinate
    (0.5 is a standard deviation) and forced to label 0.  A clean test
    set is this config with contamination 0.
    """

    n: int
    beta: tuple[float, ...] = (0.0, 2.0, 3.0)
    contamination: float = 0.0
    contaminant_mean: float = 1.5
    contaminant_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not (0.0 <= self.contamination < 0.5):
            raise ConfigError("contamination fraction must lie in [0, 0.5)")
        if self.contaminant_sd <= 0.0:
            raise ConfigError("contaminant sd must be positive")


def sim1_oracle_probability(x1, x2, q: float) -> np.ndarray:
    """True p(y=1 | x1, x2) = q x2 / (x1 + q x2)."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    return q * x2 / (x1 + q * x2)


def generate_sim1(config: Sim1Config) -> tuple[Dataset, np.ndarray]:
    """Uniform covariates on the unit square, Bernoulli labels from the oracle."""
    rng = np.random.default_rng(config.seed)
    x1 = rng.uniform(size=config.n)
    x2 = rng.uniform(size=config.n)
    theta = sim1_oracle_probability(x1, x2, config.q)
    y = (rng.uniform(size=config.n) < theta).astype(np.float64)
    data = Dataset.from_raw(np.column_stack([x1, x2]), y)
    return data, theta


def _diag_gauss_logpdf(x: np.ndarray, mean, var) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    return -0.5 * np.sum(
        (x - mean) ** 2 / var + np.log(2.0 * math.pi * var), axis=-1
    )


def sim2_oracle_probability(x1, x2, config: Sim2Config) -> np.ndarray:
    """Bayes-rule class-1 probability from the two Gaussian densities."""
    pts = np.column_stack(
        [np.asarray(x1, dtype=np.float64).ravel(), np.asarray(x2, dtype=np.float64).ravel()]
    )
    log1 = _diag_gauss_logpdf(pts, config.mean1, config.var1) + math.log(config.prevalence)
    log0 = _diag_gauss_logpdf(pts, config.mean0, config.var0) + math.log(1.0 - config.prevalence)
    return expit(log1 - log0)


def generate_sim2(config: Sim2Config) -> tuple[Dataset, np.ndarray]:
    """Mixture draw: label from the class prior, covariates from that class's Gaussian."""
    rng = np.random.default_rng(config.seed)
    y = (rng.uniform(size=config.n) < config.prevalence).astype(np.float64)
    noise = rng.standard_normal((config.n, 2))
    mean = np.where(y[:, None] == 1.0, config.mean1, config.mean0)
    sd = np.where(y[:, None] == 1.0, np.sqrt(config.var1), np.sqrt(config.var0))
    x = mean + sd * noise
    data = Dataset.from_raw(x, y)
    return data, sim2_oracle_probability(x[:, 0], x[:, 1], config)


def generate_sim3(config: Sim3Config) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Standard-normal covariates through a logistic model, then contamination.

    Returns (dataset, clean_probability, contamination_mask).  The clean
    probability is the logistic oracle evaluated at each row's
    covariates, including the appended contaminant rows whose labels
    were forced to 0; the mask marks those rows.
    """
    rng = np.random.default_rng(config.seed)
    beta = np.asarray(config.beta, dtype=np.float64)
    d = beta.shape[0] - 1
    x = rng.standard_normal((config.n, d))
    z = beta[0] + x @ beta[1:]
    probs = expit(z)
    y = (rng.uniform(size=config.n) < probs).astype(np.float64)

    n_bad = int(math.floor(config.contamination * config.n))
    if n_bad > 0:
        x_bad = rng.normal(config.contaminant_mean, config.contaminant_sd, size=(n_bad, d))
        probs_bad = expit(beta[0] + x_bad @ beta[1:])
        x = np.vstack([x, x_bad])
        y = np.concatenate([y, np.zeros(n_bad)])
        probs = np.concatenate([probs, probs_bad])
    mask = np.zeros(x.shape[0], dtype=bool)
    mask[config.n :] = True
    data = Dataset.from_raw(x, y)
    return data, probs, mask


def sim1_boundary_slope(q: float, t: float) -> float:
    """Slope of the study-1 optimal boundary x2 = t / (q (1 - t)) x1."""
    return t / (q * (1.0 - t))


def fitted_boundary_slope(beta) -> float:
    """Slope -b1/b2 of a fitted logistic model's straight-line decision boundary."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.shape[0] != 3:
        raise ConfigError("boundary slope needs (intercept, b1, b2) coefficients")
    return -beta[1] / beta[2]


def optimal_boundary(
    prob_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t: TargetThreshold | float,
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Classifier that treats exactly when the true odds exceed the threshold odds.

    Equivalent to pi(x) > t; note the strict inequality, matching the
    expected-utility argument rather than the model-facing >= rule.
    """
    tt = t.t if isinstance(t, TargetThreshold) else float(t)

    def classifier(x1, x2) -> np.ndarray:
        return np.asarray(prob_fn(x1, x2)) > tt

    return classifier


def optimal_nb(oracle_probs, outcomes, t: TargetThreshold | float) -> NetBenefitReport:
    """Net Benefit of classifying on the true probabilities (pi > t)."""
    tt = t if isinstance(t, TargetThreshold) else TargetThreshold(float(t))
    p = np.asarray(oracle_probs, dtype=np.float64).ravel()
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    positive = p > tt.t
    tp = int(np.count_nonzero(positive & (y == 1.0)))
    fp = int(np.count_nonzero(positive & (y == 0.0)))
    n = p.shape[0]
    return NetBenefitReport(
        t=tt,
        tp_count=tp,
        fp_count=fp,
        n=n,
        net_benefit=tp / n - fp / n * (tt.t / (1.0 - tt.t)),
    )


def boundary_points(
    prob_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t: float,
    x1_range: tuple[float, float],
    x2_range: tuple[float, float],
    grid: int = 200,
) -> np.ndarray:
    """Level-set crossings of prob_fn(x1, x2) = t, scanned column by column.

    For each x1 grid value, every sign change of pi - t along x2 is
    located by linear interpolation.  Returns an (m, 2) array of
    crossing points; curves with several branches yield several points
    per column.
    """
    x1s = np.linspace(*x1_range, grid)
    x2s = np.linspace(*x2_range, grid)
    points = []
    for x1 in x1s:
        vals = np.asarray(prob_fn(np.full_like(x2s, x1), x2s)) - t
        sign_change = np.where(np.diff(np.signbit(vals)))[0]
        for j in sign_change:
            frac = vals[j] / (vals[j] - vals[j + 1])
            points.append((x1, x2s[j] + frac * (x2s[j + 1] - x2s[j])))
    return np.array(points, dtype=np.float64).reshape(-1, 2)

"""Domain types and pure math for threshold-tailored Bayesian logistic regression.

The model downweights each datapoint's log-likelihood contribution by
``w_i = exp(-lam * h(pi_u_i, t))`` where ``t`` is the decision threshold
implied by the misclassification utilities, ``pi_u_i`` is a first-stage
probability estimate for row ``i`` and ``h`` is a distance function.
Everything in this module is a pure function of immutable inputs and is
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "Dataset",
    "UtilitySpec",
    "TargetThreshold",
    "DistanceFunction",
    "TailoringConfig",
    "GaussianPrior",
    "target_threshold",
    "threshold_band_for_benefit",
    "linear_predictor",
    "compute_weights",
    "tailored_log_likelihood",
    "log_prior",
    "log_posterior_unnormalized",
    "log_posterior_gradient",
    "effective_sample_size",
    "make_log_posterior",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Binary outcomes plus a design matrix with a leading intercept column.

    ``covariates`` has shape (n, d + 1); column 0 is identically 1.
    """

    outcomes: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=np.float64).ravel()
        x = np.asarray(self.covariates, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError("covariates must be a 2-d matrix with at least one column")
        if y.shape[0] != x.shape[0]:
            raise DataError(
                f"{y.shape[0]} outcomes but {x.shape[0]} covariate rows"
            )
        if y.shape[0] < 1:
            raise DataError("dataset must contain at least one row")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("outcomes must be 0 or 1")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates contain non-finite values")
        if not np.all(x[:, 0] == 1.0):
            raise DataError("first covariate column must be an all-ones intercept")
        object.__setattr__(self, "outcomes", _readonly(y))
        object.__setattr__(self, "covariates", _readonly(x))

    @classmethod
    def from_raw(cls, covariates_without_intercept, outcomes) -> "Dataset":
        """Build a Dataset, prepending the intercept column."""
        x = np.asarray(covariates_without_intercept, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        ones = np.ones((x.shape[0], 1))
        return cls(outcomes=np.asarray(outcomes), covariates=np.hstack([ones, x]))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        """Number of covariates excluding the intercept."""
        return self.covariates.shape[1] - 1

    @property
    def n_coefficients(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.outcomes[idx], self.covariates[idx])


@dataclass(frozen=True)
class UtilitySpec:
    """Utilities of the four classification outcomes (positive = benefit).

    ``benefit`` is the net utility gain of treating an individual who has
    the outcome; ``harm`` the net loss of treating one who does not.
    """

    u_tp: float
    u_fp: float
    u_fn: float
    u_tn: float

    def __post_init__(self):
        for name in ("u_tp", "u_fp", "u_fn", "u_tn"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite")
        if self.benefit + self.harm <= 0.0:
            raise ConfigError(
                "degenerate utilities: benefit + harm must be positive "
                f"(got B={self.benefit}, H={self.harm})"
            )

    @property
    def benefit(self) -> float:
        return self.u_tp - self.u_fn

    @property
    def harm(self) -> float:
        return self.u_tn - self.u_fp


@dataclass(frozen=True)
class TargetThreshold:
    """Probability cutoff at which treating and not treating break even."""

    t: float

    def __post_init__(self):
        if not (0.0 < self.t < 1.0):
            raise ConfigError(f"target threshold must lie strictly in (0, 1), got {self.t}")

    @property
    def odds(self) -> float:
        """t / (1 - t), the harm-to-benefit ratio the threshold encodes."""
        return self.t / (1.0 - self.t)


@dataclass(frozen=True)
class DistanceFunction:
    """Distance between a first-stage probability and the target threshold.

    ``squared`` uses (pi_u - t)^2.  ``epsilon_insensitive`` uses
    max(|pi_u - t| - epsilon, 0), so points within epsilon of the
    threshold are never downweighted.
    """

    kind: str = "squared"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("squared", "epsilon_insensitive"):
            raise ConfigError(f"unknown distance kind: {self.kind!r}")
        if self.epsilon < 0.0:
            raise ConfigError("epsilon must be >= 0")
        if self.kind == "squared" and self.epsilon != 0.0:
            raise ConfigError("squared distance takes no epsilon parameter")

    @classmethod
    def squared(cls) -> "DistanceFunction":
        return cls("squared")

    @classmethod
    def epsilon_insensitive(cls, epsilon: float) -> "DistanceFunction":
        return cls("epsilon_insensitive", epsilon)

    def __call__(self, pi_u, t: float) -> np.ndarray:
        p = np.asarray(pi_u, dtype=np.float64)
        if self.kind == "squared":
            return (p - t) ** 2
        return np.maximum(np.abs(p - t) - self.epsilon, 0.0)


@dataclass(frozen=True)
class TailoringConfig:
    """Everything needed to turn first-stage probabilities into weights."""

    threshold: TargetThreshold
    lam: float
    pi_u: np.ndarray
    distance: DistanceFunction = field(default_factory=DistanceFunction.squared)

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ConfigError(f"lam must be finite and >= 0, got {self.lam}")
        p = np.asarray(self.pi_u, dtype=np.float64).ravel()
        if p.size == 0:
            raise ConfigError("pi_u must be non-empty")
        if not np.all((p >= 0.0) & (p <= 1.0)):
            raise ConfigError("pi_u values must lie in [0, 1]")
        object.__setattr__(self, "pi_u", _readonly(p))

    @property
    def n(self) -> int:
        return self.pi_u.shape[0]

    def boundary_pi_u_count(self) -> int:
        """How many pi_u values sit exactly at 0 or 1 (flagged, not rejected)."""
        return int(np.count_nonzero((self.pi_u == 0.0) | (self.pi_u == 1.0)))


@dataclass(frozen=True)
class GaussianPrior:
    """Independent normal prior on each coefficient."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=np.float64).ravel()
        sd = np.asarray(self.sds, dtype=np.float64).ravel()
        if mu.shape != sd.shape:
            raise ConfigError("prior means and sds must have equal length")
        if not np.all(np.isfinite(mu)):
            raise ConfigError("prior means must be finite")
        if not np.all(np.isfinite(sd) & (sd > 0.0)):
            raise ConfigError("prior sds must be finite and strictly positive")
        object.__setattr__(self, "means", _readonly(mu))
        object.__setattr__(self, "sds", _readonly(sd))

    @classmethod
    def vague(cls, dim: int, sd: float = 100.0) -> "GaussianPrior":
        """Zero-mean prior with a large common sd (default 100)."""
        return cls(np.zeros(dim), np.full(dim, float(sd)))

    @property
    def dim(self) -> int:
        return self.means.shape[0]


def target_threshold(spec: UtilitySpec) -> TargetThreshold:
    """Threshold t = H / (H + B) at which expected utilities break even.

    Raises ConfigError if the computed value falls outside (0, 1), e.g.
    when either the net benefit B or net harm H is zero or negative.
    """
    b, h = spec.benefit, spec.harm
    if b + h <= 0.0:
        raise ConfigError("degenerate utilities: benefit + harm must be positive")
    t = h / (h + b)
    if not (0.0 < t < 1.0):
        raise ConfigError(
            f"utilities imply threshold {t}, outside the open interval (0, 1)"
        )
    return TargetThreshold(t)


def threshold_band_for_benefit(
    relative_risk_reduction: float,
    absolute_benefit_low: float,
    absolute_benefit_high: float,
) -> tuple[float, float]:
    """Risk band whose treatment gives a desired absolute benefit range.

    If treatment cuts risk by a relative fraction r, a baseline risk p
    yields absolute benefit r * p, so an absolute-benefit band [a, b]
    corresponds to baseline risks [a / r, b / r].  Useful for turning a
    clinical benefit band into a target-threshold range.
    """
    r = relative_risk_reduction
    if not (0.0 < r <= 1.0):
        raise ConfigError("relative risk reduction must lie in (0, 1]")
    lo, hi = absolute_benefit_low / r, absolute_benefit_high / r
    if not (0.0 < lo <= hi < 1.0):
        raise ConfigError("absolute benefit band maps outside (0, 1)")
    return lo, hi


def _check_beta(beta, dim: int) -> np.ndarray:
    b = np.asarray(beta, dtype=np.float64).ravel()
    if b.shape[0] != dim:
        raise DataError(f"coefficient vector has length {b.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(b)):
        raise DataError("coefficient vector contains non-finite values")
    return b


def linear_predictor(data: Dataset, beta) -> np.ndarray:
    """Row-wise x_i . beta over the design matrix."""
    b = _check_beta(beta, data.n_coefficients)
    return data.covariates @ b


def compute_weights(config: TailoringConfig) -> np.ndarray:
    """Per-datapoint weights exp(-lam * h(pi_u_i, t)).

    Weights are 1 at zero distance or lam = 0 and decay exponentially
    with distance from the threshold; they are never floored to zero.
    """
    h = config.distance(config.pi_u, config.threshold.t)
    return np.exp(-config.lam * h)


def _softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + e^z) without overflow, via max(z, 0) + log1p(e^-|z|)."""
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _pointwise_log_likelihood(data: Dataset, beta) -> np.ndarray:
    """Stable per-row Bernoulli log-likelihood y*z - log(1 + e^z)."""
    z = linear_predictor(data, beta)
    return data.outcomes * z - _softplus(z)


def tailored_log_likelihood(data: Dataset, beta, weights) -> float:
    """Weighted logistic log-likelihood sum_i w_i * l_i(beta).

    Computed through log1p-based softplus so it stays finite for linear
    predictors up to |z| ~ 700.  With all weights 1 this is exactly the
    standard logistic log-likelihood.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != data.n:
        raise DataError(f"{w.shape[0]} weights for {data.n} rows")
    value = float(w @ _pointwise_log_likelihood(data, beta))
    if not math.isfinite(value):
        raise DataError("log-likelihood is non-finite; inputs out of numeric range")
    return value


def log_prior(beta, prior: GaussianPrior) -> float:
    """Sum of normal log-densities, normalisation constants included."""
    b = _check_beta(beta, prior.dim)
    z = (b - prior.means) / prior.sds
    return float(-0.5 * (z @ z) - np.sum(np.log(prior.sds)) - 0.5 * b.size * math.log(2.0 * math.pi))


def log_posterior_unnormalized(data: Dataset, beta, weights, prior: GaussianPrior) -> float:
    """Tailored log-likelihood plus log-prior (normalising constant dropped).

    Algebraically identical to the standard-likelihood posterior with a
    data-dependent prior p(beta) / prod_i L_i^(1 - w_i).
    """
    return tailored_log_likelihood(data, beta, weights) + log_prior(beta, prior)


def log_posterior_gradient(data: Dataset, beta, weights, prior: GaussianPrior) -> np.ndarray:
    """Analytic gradient of :func:`log_posterior_unnormalized` in beta."""
    b = _check_beta(beta, data.n_coefficients)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != data.n:
        raise DataError(f"{w.shape[0]} weights for {data.n} rows")
    z = data.covariates @ b
    # expit(z) without scipy: stable piecewise form
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    grad_lik = data.covariates.T @ (w * (data.outcomes - p))
    grad_prior = -(b - prior.means) / prior.sds**2
    return grad_lik + grad_prior


def effective_sample_size(weights) -> float:
    """Effective number of datapoints informing a tailored fit: sum w_i."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    return float(np.sum(w))


def make_log_posterior(data: Dataset, weights, prior: GaussianPrior):
    """Bind data, weights and prior into a callable beta -> log-posterior."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != data.n:
        raise DataError(f"{w.shape[0]} weights for {data.n} rows")
    x = data.covariates
    y = data.outcomes
    wy = w * y
    mu, sd = prior.means, prior.sds
    if mu.shape[0] != x.shape[1]:
        raise DataError("prior dimension does not match the design matrix")
    log_norm = -float(np.sum(np.log(sd)) + 0.5 * mu.size * math.log(2.0 * math.pi))

    def logpost(beta: np.ndarray) -> float:
        z = x @ beta
        ll = wy @ z - w @ _softplus(z)
        zp = (beta - mu) / sd
        return float(ll - 0.5 * (zp @ zp) + log_norm)

    return logpost

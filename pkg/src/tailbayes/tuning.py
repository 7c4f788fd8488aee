"""Two-stage fitting pipeline: split, first-stage probabilities, CV over lam.

The training data splits into a design part (fits the first-stage model
that positions each row relative to the target threshold) and a
development part (chooses the decay rate lam by stratified K-fold CV on
Net Benefit, then receives the final fit).  With lam = 0 every weight
is 1 and the pipeline reduces exactly to standard Bayesian logistic
regression.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, SamplerError
from .model_core import (
    Dataset,
    DistanceFunction,
    GaussianPrior,
    TailoringConfig,
    TargetThreshold,
    compute_weights,
    effective_sample_size,
    make_log_posterior,
)
from .evaluation import net_benefit
from .predict import predictive_mean_sd
from .sampler import PosteriorSamples, SamplerConfig, run_mh

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "ESS_WARNING_FRACTION",
    "SplitPlan",
    "CvPlan",
    "Stage1Model",
    "FittedTailoredModel",
    "make_split",
    "make_cv_plan",
    "fit_standard",
    "stage1_pi_u",
    "cv_select_lambda",
    "fit_pipeline",
    "ess_grid",
]

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.0, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0)
ESS_WARNING_FRACTION = 0.10


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint, exhaustive index partition of a dataset.

    The design set gets floor(design_fraction * n_train) rows; the
    remainder goes to development.  An optional test fraction is carved
    off first.
    """

    design_idx: np.ndarray
    development_idx: np.ndarray
    test_idx: np.ndarray
    design_fraction: float
    test_fraction: float
    seed: int

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.design_idx, self.development_idx, self.test_idx):
            h.update(np.asarray(part, dtype=np.int64).tobytes())
        return h.hexdigest()


def make_split(
    n: int,
    design_fraction: float = 0.20,
    test_fraction: float = 0.0,
    seed: int = 0,
) -> SplitPlan:
    """Uniformly random, seed-reproducible design/development(/test) partition.

    Raises DataError when a positive fraction floors to an empty
    partition or when the development part comes out empty.  A zero
    design fraction is allowed deliberately, for externally supplied
    first-stage probabilities.
    """
    if not (0.0 <= design_fraction < 1.0) or not (0.0 <= test_fraction < 1.0):
        raise ConfigError("fractions must lie in [0, 1)")
    if design_fraction + test_fraction >= 1.0:
        raise ConfigError("design and test fractions must leave room for development")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(np.floor(test_fraction * n))
    n_train = n - n_test
    n_design = int(np.floor(design_fraction * n_train))
    if test_fraction > 0.0 and n_test == 0:
        raise DataError("test fraction yields an empty test set")
    if design_fraction > 0.0 and n_design == 0:
        raise DataError("design fraction yields an empty design set")
    if n_train - n_design < 1:
        raise DataError("development set is empty")
    test_idx = np.sort(perm[:n_test])
    design_idx = np.sort(perm[n_test : n_test + n_design])
    development_idx = np.sort(perm[n_test + n_design :])
    return SplitPlan(
        design_idx=design_idx,
        development_idx=development_idx,
        test_idx=test_idx,
        design_fraction=design_fraction,
        test_fraction=test_fraction,
        seed=int(seed),
    )


@dataclass(frozen=True)
class CvPlan:
    """Stratified fold assignment plus the lam candidate grid.

    The grid must be ascending and start at 0 so the standard model is
    always a candidate.  Folds are balanced so each fold's positive
    count is within one of its proportional share.
    """

    k: int
    lambda_grid: tuple[float, ...]
    fold_ids: np.ndarray
    seed: int

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        if len(grid) == 0:
            raise ConfigError("lambda grid must be non-empty")
        if grid[0] != 0.0:
            raise ConfigError("lambda grid must start at 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("lambda grid must be strictly ascending")
        if any(v < 0.0 for v in grid):
            raise ConfigError("lambda values must be >= 0")
        object.__setattr__(self, "lambda_grid", grid)

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_ids == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_ids != fold)


def make_cv_plan(
    outcomes,
    k: int = 5,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    seed: int = 0,
) -> CvPlan:
    """Outcome-stratified K-fold assignment, reproducible from the seed."""
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    if k < 2:
        raise ConfigError("k must be >= 2")
    if y.shape[0] < k:
        raise DataError(f"cannot make {k} folds from {y.shape[0]} rows")
    rng = np.random.default_rng(seed)
    fold_ids = np.empty(y.shape[0], dtype=np.intp)
    for label in (0.0, 1.0):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        for fold, chunk in enumerate(np.array_split(idx, k)):
            fold_ids[chunk] = fold
    return CvPlan(k=k, lambda_grid=tuple(lambda_grid), fold_ids=fold_ids, seed=int(seed))


def fit_standard(
    data: Dataset,
    sampler_config: SamplerConfig,
    prior: GaussianPrior | None = None,
) -> PosteriorSamples:
    """Standard (unweighted) Bayesian logistic regression fit."""
    if prior is None:
        prior = GaussianPrior.vague(data.n_coefficients)
    logpost = make_log_posterior(data, np.ones(data.n), prior)
    return run_mh(logpost, data.n_coefficients, sampler_config)


@dataclass(frozen=True)
class Stage1Model:
    """First-stage probability model: an unweighted Bayesian logistic fit."""

    samples: PosteriorSamples
    n_design_rows: int

    def predict_mean(self, covariates: np.ndarray) -> np.ndarray:
        """Posterior-predictive mean probability for each design-matrix row."""
        return predictive_mean_sd(covariates, self.samples)[0]


def stage1_pi_u(
    design: Dataset,
    sampler_config: SamplerConfig,
    prior: GaussianPrior | None = None,
) -> Stage1Model:
    """Fit the first-stage model on the design set.

    Requires both outcome classes to be present; with an externally
    supplied probability source this step is skipped entirely.
    """
    n_pos = int(np.sum(design.outcomes))
    if n_pos == 0 or n_pos == design.n:
        raise DataError("design set contains a single outcome class")
    samples = fit_standard(design, sampler_config, prior)
    return Stage1Model(samples=samples, n_design_rows=design.n)


def _fit_tailored(
    data: Dataset,
    weights: np.ndarray,
    prior: GaussianPrior,
    sampler_config: SamplerConfig,
) -> PosteriorSamples:
    logpost = make_log_posterior(data, weights, prior)
    return run_mh(logpost, data.n_coefficients, sampler_config)


def _cv_cell_worker(payload: tuple) -> tuple:
    """Fit one (lam, fold) cell; top-level so process pools can pickle it."""
    (
        lam_index,
        fold,
        x_train,
        y_train,
        w_train,
        x_fold,
        y_fold,
        t_value,
        prior_means,
        prior_sds,
        config,
        seed,
    ) = payload
    try:
        data = Dataset(outcomes=y_train, covariates=x_train)
        prior = GaussianPrior(prior_means, prior_sds)
        cfg = replace(config, rng_seed=seed)
        samples = _fit_tailored(data, w_train, prior, cfg)
        means, _ = predictive_mean_sd(x_fold, samples)
        nb = net_benefit(means, y_fold, t_value).net_benefit
        return lam_index, fold, nb, None
    except SamplerError as exc:
        return lam_index, fold, float("nan"), str(exc)


def cv_select_lambda(
    development: Dataset,
    pi_u_dev: np.ndarray,
    threshold: TargetThreshold,
    cv_plan: CvPlan,
    sampler_config: SamplerConfig,
    prior: GaussianPrior | None = None,
    distance: DistanceFunction | None = None,
    jobs: int = 1,
) -> tuple[float, list[dict]]:
    """Choose lam maximising the fold-average Net Benefit at the threshold.

    Fold fits share one sampler configuration with per-fold seeds
    (base seed + fold number).  Ties break toward the smallest lam.  A
    sampler failure invalidates its cell; a lam stays eligible only if
    at least K - 1 of its folds succeeded (the average then runs over
    the successes, and the failure is logged).
    """
    if distance is None:
        distance = DistanceFunction.squared()
    pi_u_dev = np.asarray(pi_u_dev, dtype=np.float64).ravel()
    if pi_u_dev.shape[0] != development.n:
        raise DataError("pi_u values do not align with the development rows")
    if prior is None:
        prior = GaussianPrior.vague(development.n_coefficients)

    grid = cv_plan.lambda_grid
    weights_per_lam = [
        compute_weights(TailoringConfig(threshold, lam, pi_u_dev, distance))
        for lam in grid
    ]

    payloads = []
    for li, lam in enumerate(grid):
        for fold in range(cv_plan.k):
            tr = cv_plan.train_indices(fold)
            te = cv_plan.fold_indices(fold)
            payloads.append(
                (
                    li,
                    fold,
                    development.covariates[tr],
                    development.outcomes[tr],
                    weights_per_lam[li][tr],
                    development.covariates[te],
                    development.outcomes[te],
                    threshold.t,
                    prior.means,
                    prior.sds,
                    sampler_config,
                    sampler_config.rng_seed + fold + 1,
                )
            )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cv_cell_worker, payloads))
    else:
        results = [_cv_cell_worker(p) for p in payloads]

    table: list[dict] = []
    by_lam: dict[int, list[float]] = {li: [] for li in range(len(grid))}
    for li, fold, nb, error in sorted(results, key=lambda r: (r[0], r[1])):
        table.append(
            {
                "lambda": grid[li],
                "fold": fold + 1,
                "nb": None if error else nb,
                "seed": sampler_config.rng_seed + fold + 1,
                "error": error,
            }
        )
        if error is None:
            by_lam[li].append(nb)
        else:
            logger.warning("CV cell lam=%s fold=%d failed: %s", grid[li], fold + 1, error)

    best_li = None
    best_nb = -np.inf
    for li in range(len(grid)):
        successes = by_lam[li]
        if len(successes) < cv_plan.k - 1:
            logger.warning(
                "lam=%s dropped: only %d of %d folds succeeded",
                grid[li],
                len(successes),
                cv_plan.k,
            )
            continue
        avg = float(np.mean(successes))
        if avg > best_nb:
            best_nb = avg
            best_li = li
    if best_li is None:
        raise SamplerError("every lambda candidate lost too many CV folds")
    return grid[best_li], table


@dataclass(frozen=True)
class FittedTailoredModel:
    """Everything the pipeline produced, sufficient to re-run bit-identically."""

    lambda_star: float
    threshold: TargetThreshold
    distance: DistanceFunction
    samples: PosteriorSamples
    split: SplitPlan
    cv_plan: CvPlan
    cv_table: list[dict]
    ess_t: float
    weights: np.ndarray
    pi_u_development: np.ndarray
    stage1: Stage1Model | None
    prior: GaussianPrior
    sampler_config: SamplerConfig
    cv_sampler_config: SamplerConfig

    @property
    def ess_fraction(self) -> float:
        return self.ess_t / self.weights.shape[0]


def fit_pipeline(
    train: Dataset,
    threshold: TargetThreshold,
    *,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    k_folds: int = 5,
    design_fraction: float = 0.20,
    distance: DistanceFunction | None = None,
    sampler_config: SamplerConfig | None = None,
    cv_sampler_config: SamplerConfig | None = None,
    prior: GaussianPrior | None = None,
    split_seed: int | None = None,
    external_pi_u: np.ndarray | None = None,
    jobs: int = 1,
) -> FittedTailoredModel:
    """Full pipeline: split, first-stage fit, CV over lam, final fit.

    The final model always fits on the entire development part at the
    chosen lam, using the sampler config's own seed, so a grid of {0}
    reproduces a standard fit on the development data bit for bit.
    When ``external_pi_u`` provides per-row probabilities for the whole
    training set, no design split is made and stage 1 is skipped.
    """
    if distance is None:
        distance = DistanceFunction.squared()
    if sampler_config is None:
        sampler_config = SamplerConfig()
    if cv_sampler_config is None:
        cv_sampler_config = sampler_config
    if prior is None:
        prior = GaussianPrior.vague(train.n_coefficients)
    if split_seed is None:
        split_seed = sampler_config.rng_seed

    if external_pi_u is not None:
        external_pi_u = np.asarray(external_pi_u, dtype=np.float64).ravel()
        if external_pi_u.shape[0] != train.n:
            raise DataError("external pi_u must supply one probability per training row")
        split = make_split(train.n, design_fraction=0.0, seed=split_seed)
        stage1 = None
        pi_u_dev = external_pi_u[split.development_idx]
    else:
        split = make_split(train.n, design_fraction=design_fraction, seed=split_seed)
        design = train.subset(split.design_idx)
        stage1 = stage1_pi_u(design, sampler_config, prior)
        pi_u_dev = stage1.predict_mean(train.covariates[split.development_idx])

    development = train.subset(split.development_idx)
    n_boundary = int(np.count_nonzero((pi_u_dev == 0.0) | (pi_u_dev == 1.0)))
    if n_boundary:
        logger.warning("%d first-stage probabilities sit exactly at 0 or 1", n_boundary)

    cv_plan = make_cv_plan(development.outcomes, k_folds, lambda_grid, seed=split_seed)
    if len(cv_plan.lambda_grid) == 1:
        lambda_star, cv_table = cv_plan.lambda_grid[0], []
    else:
        lambda_star, cv_table = cv_select_lambda(
            development,
            pi_u_dev,
            threshold,
            cv_plan,
            cv_sampler_config,
            prior,
            distance,
            jobs=jobs,
        )

    weights = compute_weights(TailoringConfig(threshold, lambda_star, pi_u_dev, distance))
    ess_t = effective_sample_size(weights)
    if ess_t / development.n < ESS_WARNING_FRACTION:
        logger.warning(
            "effective sample size %.1f is below %.0f%% of the development rows",
            ess_t,
            100 * ESS_WARNING_FRACTION,
        )
    samples = _fit_tailored(development, weights, prior, sampler_config)
    return FittedTailoredModel(
        lambda_star=lambda_star,
        threshold=threshold,
        distance=distance,
        samples=samples,
        split=split,
        cv_plan=cv_plan,
        cv_table=cv_table,
        ess_t=ess_t,
        weights=weights,
        pi_u_development=pi_u_dev,
        stage1=stage1,
        prior=prior,
        sampler_config=sampler_config,
        cv_sampler_config=cv_sampler_config,
    )


def ess_grid(
    pi_u,
    threshold: TargetThreshold,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    distance: DistanceFunction | None = None,
) -> list[dict]:
    """Effective sample size per lam candidate, computable before any fit."""
    if distance is None:
        distance = DistanceFunction.squared()
    pi_u = np.asarray(pi_u, dtype=np.float64).ravel()
    rows = []
    for lam in lambda_grid:
        w = compute_weights(TailoringConfig(threshold, float(lam), pi_u, distance))
        ess = effective_sample_size(w)
        rows.append(
            {
                "lambda": float(lam),
                "ess": ess,
                "ess_fraction": ess / pi_u.shape[0],
                "low_ess": ess / pi_u.shape[0] < ESS_WARNING_FRACTION,
            }
        )
    return rows

"""Bayesian logistic regression tailored to a decision threshold.

Per-datapoint likelihood contributions are exponentially downweighted
by their first-stage probability's distance from the target threshold,
so the fit concentrates on the region of the covariate space where the
treat/no-treat decision is actually made.  Models are sampled with
random-walk Metropolis-Hastings, the decay rate is tuned by stratified
cross-validation on Net Benefit, and everything is reproducible from
recorded seeds.
"""

from .errors import (
    ConfigError,
    DataError,
    RecalibrationError,
    SamplerError,
    TailbayesError,
)
from .model_core import (
    Dataset,
    DistanceFunction,
    GaussianPrior,
    TailoringConfig,
    TargetThreshold,
    UtilitySpec,
    compute_weights,
    effective_sample_size,
    linear_predictor,
    log_posterior_gradient,
    log_posterior_unnormalized,
    log_prior,
    make_log_posterior,
    tailored_log_likelihood,
    target_threshold,
    threshold_band_for_benefit,
)
from .sampler import (
    HpdSummary,
    PosteriorSamples,
    SamplerConfig,
    hpd_interval,
    run_mh,
    summarize,
)
from .predict import PredictiveResult, classify, posterior_predictive, predictive_mean_sd
from .evaluation import (
    CalibrationCurve,
    MiscalibrationSpec,
    NetBenefitReport,
    PairedDelta,
    calibration_curve,
    logistic_recalibrate,
    net_benefit,
    paired_delta,
    perturb_calibration,
)
from .tuning import (
    DEFAULT_LAMBDA_GRID,
    CvPlan,
    FittedTailoredModel,
    SplitPlan,
    cv_select_lambda,
    ess_grid,
    fit_pipeline,
    fit_standard,
    make_cv_plan,
    make_split,
    stage1_pi_u,
)
from .simulation import (
    Sim1Config,
    Sim2Config,
    Sim3Config,
    generate_sim1,
    generate_sim2,
    generate_sim3,
    optimal_boundary,
    optimal_nb,
)

__version__ = "0.1.0"

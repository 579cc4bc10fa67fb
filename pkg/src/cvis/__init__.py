"""Bifidelity rare-event failure probability estimation.

The estimator writes the failure probability as P_F = alpha * P_FL: a cheap
low-fidelity model carries the bulk of the estimate through subset
simulation (P_FL), and a short importance-sampled run of the expensive
high-fidelity model corrects it through the ratio alpha. The package also
ships the comparison estimators (multifidelity importance sampling and an
approximate control variate), two analytical benchmarks, a Monte Carlo
oracle, and a CLI for replicated experiments.
"""

from .distributions import JointInputDistribution, Marginal
from .rng import RngStream
from .models import (
    HF,
    LF,
    Example1Config,
    ModelPair,
    ShearBuildingConfig,
    example1_distribution,
    example1_pair,
    indicator,
    shear_building_distribution,
    shear_building_pair,
)
from .smoothing import HARD_INDICATOR, SmoothedIsd, beta_star, log_isd_unnormalized, log_s_l, s_l
from .batch_means import BatchMeansConfig, estimator_moments, rbm_covariance, rbm_variance
from .demc import ChainEnsemble, DemcConfig, Record, demc_run
from .subset import (
    MaxLevelsExceeded,
    SusConfig,
    SusResult,
    run_sus,
    select_seeds,
    weighted_draw_order,
)
from .estimator import (
    AlphaStats,
    CvisReport,
    IsMoments,
    allocate_surplus,
    alpha_lognormal_stats,
    alpha_tilde,
    is_moments,
    kappa_tilde,
    pf_and_cov,
    run_cvis,
)
from .baselines import (
    BaselineResult,
    CsEstimate,
    EacvResult,
    eacv_estimate,
    mc_integrate_cs,
    mfis_estimate,
    snis_estimate,
)
from .experiment import (
    Allocation,
    ConfigError,
    ESTIMATOR_NAMES,
    ExperimentConfig,
    OracleResult,
    StatsSummary,
    TrialRow,
    load_config,
    mc_oracle,
    parse_config,
    preset_allocation,
    read_rows,
    run_experiment,
    run_trial,
    trial_statistics,
)

__all__ = [
    "ESTIMATOR_NAMES",
    "HARD_INDICATOR",
    "HF",
    "LF",
    "Allocation",
    "AlphaStats",
    "BaselineResult",
    "BatchMeansConfig",
    "ChainEnsemble",
    "ConfigError",
    "CsEstimate",
    "CvisReport",
    "DemcConfig",
    "EacvResult",
    "Example1Config",
    "ExperimentConfig",
    "IsMoments",
    "JointInputDistribution",
    "Marginal",
    "MaxLevelsExceeded",
    "ModelPair",
    "OracleResult",
    "Record",
    "RngStream",
    "ShearBuildingConfig",
    "SmoothedIsd",
    "StatsSummary",
    "SusConfig",
    "SusResult",
    "TrialRow",
    "allocate_surplus",
    "alpha_lognormal_stats",
    "alpha_tilde",
    "beta_star",
    "demc_run",
    "eacv_estimate",
    "estimator_moments",
    "example1_distribution",
    "example1_pair",
    "indicator",
    "is_moments",
    "kappa_tilde",
    "load_config",
    "log_isd_unnormalized",
    "log_s_l",
    "mc_integrate_cs",
    "mc_oracle",
    "mfis_estimate",
    "parse_config",
    "pf_and_cov",
    "preset_allocation",
    "rbm_covariance",
    "rbm_variance",
    "read_rows",
    "run_cvis",
    "run_experiment",
    "run_sus",
    "run_trial",
    "s_l",
    "snis_estimate",
    "select_seeds",
    "shear_building_distribution",
    "shear_building_pair",
    "trial_statistics",
    "weighted_draw_order",
]

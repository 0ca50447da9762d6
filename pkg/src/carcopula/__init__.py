"""Gamma-marginal CAR Gaussian copula models for areal panel data."""

from .graph import ArealGraph, MoranResult, load_adjacency, moran_i, moran_i_by_year
from .gmrf import (
    CarPrecision,
    ScaledCarCorrelation,
    build_precision,
    conditional_from_precision,
    gmrf_logpdf,
    sample_gmrf,
    scaled_correlation,
)
from .marginals import (
    FitConvergenceError,
    GammaRegionFit,
    GammaSvcParams,
    LognormalRegionParams,
    TimeStandardizer,
    fit_region_gamma,
    fit_region_lognormal,
    gamma_cdf,
    gamma_logpdf,
    gamma_quantile,
    marginal_components,
    pit_transform,
    standardize_time,
)
from .panel import RegionalPanel, read_adjacency_csv, read_panel_csv, write_panel_csv
from .copula import (
    CopulaModel,
    copula_logdensity,
    joint_loglik,
    latent_scores,
    simulate_panel,
    yearwise_rho_profile,
)
from .inference import (
    ALL_SPECS,
    ChainConfig,
    ChainOutput,
    DataLayer,
    GibbsSampler,
    HyperState,
    ModelSpec,
    PriorLayer,
    run_chain,
)
from .diagnostics import (
    ComparisonReport,
    PpcResult,
    compare_models,
    dic,
    ess_batch_means,
    geweke,
    posterior_predictive_check,
    qq_discrepancy,
    waic,
)
from .sim import Metrics, StudyConfig, StudyTables, metrics, run_study

__version__ = "0.1.0"

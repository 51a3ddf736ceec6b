"""Exact KL predictive risk of spike-and-slab discrete priors in the sparse
Gaussian sequence model: prior constructions, risk quadrature, worst-case
search, and closed-form theory diagnostics."""

from .model import (
    Atom,
    DiscretePrior,
    ModelParams,
    Truncation,
    build_bigrid_prior,
    build_cluster_prior,
    build_clustered_prior,
    build_estimative_grid_prior,
    build_predictive_grid_prior,
    build_truncated_cluster_prior,
    cluster_size,
    make_params,
)
from .risk import (
    BayesRiskResult,
    MixtureTerm,
    MultivariateRisk,
    OriginRisk,
    QuadratureError,
    QuadratureSpec,
    RiskProfile,
    SearchSpec,
    bayes_risk,
    benchmark_risk,
    expect_log_mixture,
    multivariate_max_risk,
    origin_risk,
    predictive_risk,
    risk_decomposition,
    risk_direct,
    sup_risk,
)
from .rules import (
    BayesRule,
    GaussianMixture,
    PluginRule,
    SpikeUniformSlabRule,
    ThresholdedClusterRule,
    log_predictive_density,
    posterior_predictive,
)
from .theory import (
    MinimaxAsymptote,
    RootInterval,
    UnitClusterGap,
    bayes_minimax_ratio_limit,
    cluster_coverage_check,
    minimax_asymptote,
    peak_index_combined,
    peak_index_past,
    per_atom_asymptotic_risk,
    unit_cluster_gap_analysis,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

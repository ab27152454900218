"""Gaussian AR(1) with Markov regime: simulation, likelihood, EM, and
penalized selection of the number of hidden states."""

__version__ = "0.1.0"

from .errors import (
    FitError,
    ModelValidationError,
    NoStationaryDistributionError,
    NumericalError,
    OracleFailureError,
    RegimeSelectError,
)
from .model import (
    ModelSpec,
    ParameterBounds,
    RegimeParams,
    Trajectory,
    Violation,
    permute_spec,
    simulate,
    stability_index,
    stationary_distribution,
    validate_model,
)
from .likelihood import (
    RegimeFit,
    SegmentStats,
    conditional_loglik,
    lipschitz_probe,
    loglik_bruteforce,
    loglik_forward,
    ols_fit,
    path_prior_loglik,
    segment_stats,
)
from .mixture import (
    BoundCheck,
    BoundTerms,
    PriorConfig,
    ProjectionSet,
    bound_terms,
    build_projection_set,
    conditional_mixture_log,
    empirical_transition_matrix,
    kt_bound_check,
    kt_path_mixture_log,
    mixture_bruteforce_log,
    mixture_numeric_oracle,
    verify_bound,
)
from .estimation import (
    EmConfig,
    EStepResult,
    FitResult,
    e_step,
    em_fit,
    m_step,
    multistart_fit,
)
from .selection import (
    KlRateEstimate,
    PenaltyConfig,
    SelectionResult,
    SelectionRow,
    StudyResult,
    kl_rate_estimate,
    mc_consistency_study,
    penalty,
    select_order,
)
from .estimators import MarkovSwitchingAR, StateCountSelector

__all__ = [
    "__version__",
    "RegimeSelectError",
    "ModelValidationError",
    "NoStationaryDistributionError",
    "NumericalError",
    "OracleFailureError",
    "FitError",
    "ModelSpec",
    "ParameterBounds",
    "RegimeParams",
    "Trajectory",
    "Violation",
    "permute_spec",
    "simulate",
    "stability_index",
    "stationary_distribution",
    "validate_model",
    "RegimeFit",
    "SegmentStats",
    "conditional_loglik",
    "lipschitz_probe",
    "loglik_bruteforce",
    "loglik_forward",
    "ols_fit",
    "path_prior_loglik",
    "segment_stats",
    "BoundCheck",
    "BoundTerms",
    "PriorConfig",
    "ProjectionSet",
    "bound_terms",
    "build_projection_set",
    "conditional_mixture_log",
    "empirical_transition_matrix",
    "kt_bound_check",
    "kt_path_mixture_log",
    "mixture_bruteforce_log",
    "mixture_numeric_oracle",
    "verify_bound",
    "EmConfig",
    "EStepResult",
    "FitResult",
    "e_step",
    "em_fit",
    "m_step",
    "multistart_fit",
    "KlRateEstimate",
    "PenaltyConfig",
    "SelectionResult",
    "SelectionRow",
    "StudyResult",
    "kl_rate_estimate",
    "mc_consistency_study",
    "penalty",
    "select_order",
    "MarkovSwitchingAR",
    "StateCountSelector",
]

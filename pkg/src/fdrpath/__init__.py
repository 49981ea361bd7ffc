"""Conservative FDR estimation for variable-selection procedures.

The central object is :class:`SelectionFDR`, an sklearn-style estimator
whose ``fit`` computes, for every value of the selection procedure's
tuning parameter, a conservatively biased estimate of the false
discovery rate, its per-hypothesis decomposition, and the selection
counts.  Companion modules provide cross-validation curves, bootstrap
standard errors, exact path algorithms for the lasso and forward
stepwise, and simulation scenarios with known ground truth.
"""

from .bootstrap import (
    BootstrapResult,
    NullSetEstimate,
    bootstrap_se_modelx,
    bootstrap_se_parametric,
    cv_null_set,
    pvalue_null_set,
)
from .crossval import CvCurve, cv_curve, one_se_rule
from .data import (
    Dataset,
    ScenarioTruth,
    SelectionSet,
    fdp,
    fpr,
    index_to_pair,
    load_csv,
    pair_index,
)
from .estimator import (
    FdrConfig,
    FdrCurve,
    SelectionFDR,
    estimate_curve,
    phi_canonical,
    rao_blackwell_star_mc,
    selection_probability_mc,
    storey_estimate,
    threshold_curve_closed_form,
)
from .exceptions import (
    CalibrationError,
    ConvergenceError,
    DataError,
    DegeneratePathError,
    EstimationError,
    FdrPathError,
    RankDeficiencyError,
    SeparationError,
)
from .laws import (
    BernoulliCovariateLaw,
    CallbackCovariateLaw,
    CovariateLaw,
    GaussianCovariateLaw,
    GraphicalContext,
    LinearModelContext,
    ModelXContext,
    ar1_covariance,
    ar1_gaussian_law,
    graphical_pvalues,
    t_pvalues,
)
from .mle import constrained_mle_graphical, constrained_mle_linear
from .scenarios import (
    ScenarioSpec,
    calibrate_signal,
    desk_spec,
    equicorrelated_counterexample,
    generate,
    oracle_curves,
    paper_spec,
)
from .selectors import (
    GraphicalLassoFit,
    LassoFit,
    LogisticFit,
    Selector,
    forward_stepwise,
    graphical_lasso,
    lasso_fit,
    lasso_lambda_max,
    log_grid,
    logistic_l1,
    p_threshold,
    sample_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "BernoulliCovariateLaw",
    "BootstrapResult",
    "CalibrationError",
    "CallbackCovariateLaw",
    "ConvergenceError",
    "CovariateLaw",
    "CvCurve",
    "DataError",
    "Dataset",
    "DegeneratePathError",
    "EstimationError",
    "FdrConfig",
    "FdrCurve",
    "FdrPathError",
    "GaussianCovariateLaw",
    "GraphicalContext",
    "GraphicalLassoFit",
    "LassoFit",
    "LinearModelContext",
    "LogisticFit",
    "ModelXContext",
    "NullSetEstimate",
    "RankDeficiencyError",
    "ScenarioSpec",
    "ScenarioTruth",
    "SelectionFDR",
    "SelectionSet",
    "Selector",
    "SeparationError",
    "ar1_covariance",
    "ar1_gaussian_law",
    "bootstrap_se_modelx",
    "bootstrap_se_parametric",
    "calibrate_signal",
    "constrained_mle_graphical",
    "constrained_mle_linear",
    "cv_curve",
    "cv_null_set",
    "desk_spec",
    "equicorrelated_counterexample",
    "estimate_curve",
    "fdp",
    "forward_stepwise",
    "fpr",
    "generate",
    "graphical_lasso",
    "graphical_pvalues",
    "index_to_pair",
    "lasso_fit",
    "lasso_lambda_max",
    "load_csv",
    "log_grid",
    "logistic_l1",
    "one_se_rule",
    "oracle_curves",
    "p_threshold",
    "pair_index",
    "paper_spec",
    "phi_canonical",
    "pvalue_null_set",
    "rao_blackwell_star_mc",
    "sample_covariance",
    "selection_probability_mc",
    "storey_estimate",
    "t_pvalues",
    "threshold_curve_closed_form",
]

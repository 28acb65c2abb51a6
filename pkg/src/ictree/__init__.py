"""Conditional inference survival trees for interval-censored data."""

from .baselines import ImputationMode, fit_imputed_tree, impute
from .ctree import (
    Covariate,
    LinearStatisticMoments,
    Split,
    SurvivalTree,
    TreeConfig,
    TreeNode,
    UnroutableLevelError,
    best_split,
    covariate_transform,
    grow_tree,
    linear_statistic_moments,
    predict_curve,
    select_variable,
)
from .estimator import (
    CensoredObservation,
    IntervalData,
    NPMLEConvergenceError,
    SurvivalCurve,
    TurnbullInterval,
    fit_npmle,
    log_likelihood,
    product_limit,
    survival_at,
    turnbull_intervals,
)
from .scores import ScoreError, logrank_scores

__version__ = "0.1.0"

__all__ = [
    "CensoredObservation", "Covariate", "ImputationMode", "IntervalData", "LinearStatisticMoments",
    "NPMLEConvergenceError", "ScoreError", "Split", "SurvivalCurve", "SurvivalTree", "TreeConfig",
    "TreeNode", "TurnbullInterval", "UnroutableLevelError", "best_split", "covariate_transform",
    "fit_imputed_tree", "fit_npmle", "grow_tree", "impute", "linear_statistic_moments",
    "log_likelihood", "logrank_scores", "predict_curve", "product_limit", "select_variable",
    "survival_at", "turnbull_intervals",
]

"""Stacked difference-in-differences estimation."""

from .bootstrap import BootstrapResult, cluster_bootstrap, draw_multiplicities
from .estimator import (AttGt, CohortEstimator, Coefficient, EstimateSet, aggregate, att_gt, dosage_estimates,
                        estimate, pre_trend_gt, raw_means)
from .stack import StackedData, shifted_times, stack_cohorts
from .twfe import TwfeResult, twfe_stacked

__all__ = [
    "AttGt", "BootstrapResult", "CohortEstimator", "Coefficient", "EstimateSet", "StackedData", "TwfeResult",
    "aggregate", "att_gt", "cluster_bootstrap", "dosage_estimates", "draw_multiplicities", "estimate",
    "pre_trend_gt", "raw_means", "shifted_times", "stack_cohorts", "twfe_stacked",
]

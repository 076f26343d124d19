"""The four constructive schemes and their property probes."""

from .common import RegressionSurrogate, SolverOutput
from .firstorder import FirstOrderProblem, max_abs_drift_problem, solve_first_order
from .hjb import HJBProblem, solve_hjb, uncertain_volatility_problem
from .perron import PerronResult, exit_skeleton, perron_scheme, skeleton_sup_distance
from .probes import (ComparisonReport, DPPReport, StabilityRow,
                     coupled_mc_convergence, dpp_consistency,
                     partial_comparison_probe, stability_probe,
                     stability_signed_defect, tree_convergence_ratios)
from .semilinear import SemilinearProblem, solve_at_anchors, solve_semilinear

__all__ = [
    "RegressionSurrogate", "SolverOutput",
    "FirstOrderProblem", "max_abs_drift_problem", "solve_first_order",
    "HJBProblem", "solve_hjb", "uncertain_volatility_problem",
    "PerronResult", "exit_skeleton", "perron_scheme", "skeleton_sup_distance",
    "ComparisonReport", "DPPReport", "StabilityRow",
    "coupled_mc_convergence", "dpp_consistency", "partial_comparison_probe",
    "stability_probe", "stability_signed_defect", "tree_convergence_ratios",
    "SemilinearProblem", "solve_at_anchors", "solve_semilinear",
]

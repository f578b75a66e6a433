"""Clipped stochastic solvers for variational inequalities with generalized smooth operators."""

from clipvi.problems import (
    Ball,
    Box,
    MinMaxOperator,
    NegIdentityOperator,
    NoiseSpec,
    ProblemInstance,
    SingletonSolution,
    WholeSpace,
    distance_to_solution,
    eval_minmax_operator,
    minmax_problem,
    project,
    quasi_sharp_gap,
    sample_oracle,
)
from clipvi.schedules import (
    ExperimentSchedule,
    HarmonicSchedule,
    PowerLawSchedule,
    clip_stepsize,
    korpelevich_offset,
    series_lower_bound,
    series_upper_bound,
    theoretical_a,
)
from clipvi.smoothness import (
    SymmetryConstants,
    VerificationReport,
    alpha_symmetry_residual,
    derived_constants,
    fit_symmetry_constants,
    verify_assumptions,
)
from clipvi.methods import (
    AveragingState,
    MethodKind,
    MethodState,
    RunTrace,
    run_batch,
    run_method,
    update_weighted_average,
)

__version__ = "0.1.0"

__all__ = [
    "AveragingState",
    "Ball",
    "Box",
    "ExperimentSchedule",
    "HarmonicSchedule",
    "MethodKind",
    "MethodState",
    "MinMaxOperator",
    "NegIdentityOperator",
    "NoiseSpec",
    "PowerLawSchedule",
    "ProblemInstance",
    "RunTrace",
    "SingletonSolution",
    "SymmetryConstants",
    "VerificationReport",
    "WholeSpace",
    "alpha_symmetry_residual",
    "clip_stepsize",
    "derived_constants",
    "distance_to_solution",
    "eval_minmax_operator",
    "fit_symmetry_constants",
    "korpelevich_offset",
    "minmax_problem",
    "project",
    "quasi_sharp_gap",
    "run_batch",
    "run_method",
    "sample_oracle",
    "series_lower_bound",
    "series_upper_bound",
    "theoretical_a",
    "update_weighted_average",
    "verify_assumptions",
]

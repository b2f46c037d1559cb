"""Periodic 1D crystal surface evolution with an exponential mobility.

Each outer step freezes the mobility at the current profile and minimizes
total variation plus a weighted H^-1 distance with a primal-dual iteration.
"""

__version__ = "0.1.0"

from .grid import GridError, GridSpec, centered_difference, circular_convolution, minmod
from .mobility import (EXACT_SIGN, SMOOTHED_SIGN, MobilityConfig, MobilityOverflowError,
                       MollifierSpec, compute_mobility, sample_mollifier_derivative)
from .variational import (WeightedLaplacian, assemble_weighted_laplacian, hminus1_sq,
                          objective_phi, tv_energy)
from .pdhg import H1_DOT, L2, PdhgConfig, PdhgReport, solve_inner
from .initial import initial_profile
from .flow import FlowConfig, FlowError, FlowTrace, evolve, step_outer, validate_config
from .experiments import (StudyResult, fit_loglog_slope, penalty_comparison_study,
                          space_refinement_study, time_refinement_study)

__all__ = [
    "GridError", "GridSpec", "centered_difference", "circular_convolution", "minmod",
    "EXACT_SIGN", "SMOOTHED_SIGN", "MobilityConfig", "MobilityOverflowError", "MollifierSpec",
    "compute_mobility", "sample_mollifier_derivative",
    "WeightedLaplacian", "assemble_weighted_laplacian", "hminus1_sq", "objective_phi", "tv_energy",
    "H1_DOT", "L2", "PdhgConfig", "PdhgReport", "solve_inner",
    "initial_profile",
    "FlowConfig", "FlowError", "FlowTrace", "evolve", "step_outer", "validate_config",
    "StudyResult", "fit_loglog_slope", "penalty_comparison_study", "space_refinement_study",
    "time_refinement_study",
]

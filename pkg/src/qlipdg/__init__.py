"""Interior penalty DG for quasilinear parabolic problems with hp a posteriori estimates."""

from .config import ConfigError, StudyConfig, build_config
from .estimator import (
    BoundConstants,
    ErrorReport,
    EstimatorBreakdown,
    accumulate_parabolic,
    eta_elliptic,
    oscillation,
    populate_constants,
    steady_estimate,
    true_error,
)
from .fespace import DgFunction, DgSpace, energy_norm, face_weighted_norm, l2_project, l2_project_lower
from .ipdg import DiscretizationParams, apply_discrete_operator, reconstruction_data, semilinear_form
from .mesh import Mesh, build_structured_mesh, refine_uniform
from .oswald import oswald_interpolate
from .problem import Nonlinearity, ProblemSpec, check_hypotheses, manufactured_problem, preset_nonlinearity
from .solver import NewtonConfig, march_parabolic, solve_elliptic

__version__ = "0.1.0"

__all__ = [
    "BoundConstants",
    "ConfigError",
    "DgFunction",
    "DgSpace",
    "DiscretizationParams",
    "ErrorReport",
    "EstimatorBreakdown",
    "Mesh",
    "NewtonConfig",
    "Nonlinearity",
    "ProblemSpec",
    "StudyConfig",
    "accumulate_parabolic",
    "apply_discrete_operator",
    "build_config",
    "build_structured_mesh",
    "check_hypotheses",
    "energy_norm",
    "eta_elliptic",
    "face_weighted_norm",
    "l2_project",
    "l2_project_lower",
    "manufactured_problem",
    "march_parabolic",
    "oscillation",
    "oswald_interpolate",
    "populate_constants",
    "preset_nonlinearity",
    "reconstruction_data",
    "refine_uniform",
    "semilinear_form",
    "solve_elliptic",
    "steady_estimate",
    "true_error",
]

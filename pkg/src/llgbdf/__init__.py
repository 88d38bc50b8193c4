"""Linearly implicit BDF tangent-plane finite element solver for the Landau-Lifshitz-Gilbert equation."""
from .bdf import BdfScheme, StepHistory, Trajectory, bdf_step, run_trajectory
from .coefficients import bdf_coefficients, extrapolation_coefficients
from .fem import (
    FiniteElementSpace,
    NodalField,
    assemble_constraint,
    assemble_mass,
    assemble_skew,
    assemble_stiffness,
    interpolate,
)
from .linalg import NotConverged, SaddleSystem, solve_saddle
from .mesh import Mesh, build_box_mesh
from .stability import alpha_threshold, check_positivity, g_matrix, verify_g_inequality
from .tangent import project_tangent, tangent_residual

__all__ = [
    "BdfScheme", "StepHistory", "Trajectory", "bdf_step", "run_trajectory",
    "bdf_coefficients", "extrapolation_coefficients",
    "FiniteElementSpace", "NodalField", "assemble_constraint", "assemble_mass", "assemble_skew",
    "assemble_stiffness", "interpolate",
    "NotConverged", "SaddleSystem", "solve_saddle",
    "Mesh", "build_box_mesh",
    "alpha_threshold", "check_positivity", "g_matrix", "verify_g_inequality",
    "project_tangent", "tangent_residual",
]
__version__ = "0.1.0"

"""Immersed finite elements for optimal control with an interface control."""
from .geometry import CircleLevelSet, LineLevelSet, WaterdropLevelSet
from .mesh import build_mesh, classify_elements, extract_interface_polyline
from .optimize import build_problem, fixed_point_solve
from .verify import error_norms, get_case, run_convergence_study

__version__ = "0.1.0"

__all__ = [
    "CircleLevelSet",
    "LineLevelSet",
    "WaterdropLevelSet",
    "build_mesh",
    "classify_elements",
    "extract_interface_polyline",
    "build_problem",
    "fixed_point_solve",
    "get_case",
    "error_norms",
    "run_convergence_study",
]

"""Numerical one-phase free boundary problems on uniform grids."""

from pathlib import Path

from .analysis import extract_free_boundary, fbc_check
from .config import ConfigError, build_problem, load
from .flatness import improvement_cascade
from .grid import BoundaryData, Grid, GridFunction, build_grid
from .kernel import Kernel, StructuralParams, prototype_kernel, verify_structural_conditions
from .minimizer import Problem, Solution, SolveOptions, solve
from .oracle import brute_force_1d, oracle_1d

__version__ = "0.1.0"

CONFIG_DIR = Path(__file__).parent / "configs"


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``bundled_config("strip_p2")``."""
    path = CONFIG_DIR / (name if name.endswith(".cfg") else name + ".cfg")
    if not path.is_file():
        raise FileNotFoundError(f"no bundled config {name!r}")
    return path


__all__ = [
    "BoundaryData", "CONFIG_DIR", "ConfigError", "Grid", "GridFunction", "Kernel", "Problem",
    "Solution", "SolveOptions", "StructuralParams", "build_grid", "build_problem",
    "bundled_config", "brute_force_1d", "extract_free_boundary", "fbc_check",
    "improvement_cascade", "load", "oracle_1d", "prototype_kernel", "solve",
    "verify_structural_conditions",
]

"""Measure-valued formulations of semilinear heat equations: finite-difference
reference solves, Young-measure residual checks and moment relaxations."""

from .errors import (
    ConfigError,
    DegreeOverflow,
    GridMismatch,
    MvRelaxError,
    NewtonDivergence,
    NumericalBreakdown,
    SingularJacobian,
)
from .grid import SpaceTimeGrid
from .pde_core import FieldSolution, PdeProblem, solve
from .polynomial import Polynomial

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegreeOverflow",
    "FieldSolution",
    "GridMismatch",
    "MvRelaxError",
    "NewtonDivergence",
    "NumericalBreakdown",
    "PdeProblem",
    "Polynomial",
    "SingularJacobian",
    "SpaceTimeGrid",
    "solve",
]

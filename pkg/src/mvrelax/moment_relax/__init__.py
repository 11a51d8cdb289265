"""Moment-SOS relaxation of the occupation-measure identities."""

from .assembly import (
    IDENTITY_FAMILIES,
    MomentLayout,
    MonomialIndex,
    RelaxationProblem,
    assemble,
    lift_moments,
    measure_specs,
    reference_moments,
)
from .report import (
    BoundRow,
    bounds_report,
    extract_first_moments,
    gap_demonstration,
    intervals,
    write_bounds_csv,
)
from .sdpa import read_sdpa, write_sdpa
from .solver import ConicSolution, SolverOptions, default_options, residuals, solve

__all__ = [
    "IDENTITY_FAMILIES",
    "BoundRow",
    "ConicSolution",
    "MomentLayout",
    "MonomialIndex",
    "RelaxationProblem",
    "SolverOptions",
    "default_options",
    "assemble",
    "bounds_report",
    "extract_first_moments",
    "gap_demonstration",
    "intervals",
    "lift_moments",
    "measure_specs",
    "read_sdpa",
    "reference_moments",
    "residuals",
    "solve",
    "write_bounds_csv",
    "write_sdpa",
]

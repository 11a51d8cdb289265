"""Bound tables, first-moment extraction and the relaxation-gap demonstration."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..pde_core import FieldSolution, PdeProblem
from ..polynomial import Polynomial, T as TVAR, X as XVAR, Y as YVAR
from ..young_measure import BumpSpec
from .assembly import RelaxationProblem, _unscale, assemble
from .solver import ConicSolution, SolverOptions, default_options, min_eigenvalues, solve

log = logging.getLogger(__name__)

CSV_COLUMNS = ("objective_id", "d", "sense", "value", "gap", "reference")


@dataclass(frozen=True)
class BoundRow:
    """One solve.  ``value`` is the certified bound (a valid lower bound for
    ``min``, upper bound for ``max``); ``objective`` is the primal value of the
    returned point."""

    objective_id: str
    d: int
    sense: str
    value: float
    gap: float
    reference: float
    objective: float
    status: str
    seconds: float


def reference_value(sol: FieldSolution, poly: Polynomial) -> float:
    """int int poly(t, x, y*, y*_t, y*_x) dx dt by the trapezoid rule."""
    g = sol.grid
    vals = poly(t=g.tt, x=g.xx, y=np.asarray(sol.y), z0=np.asarray(sol.dty), z1=np.asarray(sol.dxy))
    return float(g.integrate(np.broadcast_to(vals, g.shape)))


def bounds_report(
    problem: PdeProblem,
    objectives: dict[str, Polynomial] | Sequence[tuple[str, Polynomial]],
    degrees: Sequence[int],
    reference: FieldSolution | None = None,
    opts: SolverOptions | None = None,
    **assemble_kwargs,
) -> list[BoundRow]:
    """Min and max of every objective at every degree."""
    items = list(objectives.items()) if isinstance(objectives, dict) else list(objectives)
    out = []
    for d in degrees:
        base = assemble(problem, d, Polynomial.constant(0.0), **assemble_kwargs)
        d_opts = opts or default_options(d)
        for obj_id, poly in items:
            ref = reference_value(reference, poly) if reference is not None else float("nan")
            pair = {}
            for sense in ("min", "max"):
                sol = solve(base.with_objective(poly, sense), d_opts)
                pair[sense] = sol
            gap = pair["max"].info["certified_bound"] - pair["min"].info["certified_bound"]
            for sense, sol in pair.items():
                out.append(BoundRow(obj_id, d, sense, sol.info["certified_bound"], gap, ref,
                                    sol.objective, sol.status, sol.seconds))
                log.info("%s d=%d %s: %.8g (%s)", obj_id, d, sense, sol.info["certified_bound"], sol.status)
    return out


def write_bounds_csv(rows: Sequence[BoundRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.objective_id, r.d, r.sense, f"{r.value:.12g}", f"{r.gap:.12g}", f"{r.reference:.12g}"])
    return path


def intervals(rows: Sequence[BoundRow], objective_id: str) -> dict[int, tuple[float, float]]:
    """{d: (lower, upper)} for one objective."""
    out: dict[int, list[float]] = {}
    for r in rows:
        if r.objective_id == objective_id:
            out.setdefault(r.d, [np.nan, np.nan])[0 if r.sense == "min" else 1] = r.value
    return {d: (lo, hi) for d, (lo, hi) in sorted(out.items())}


@dataclass(frozen=True)
class MomentComparison:
    label: str
    relaxation: float
    lift: float

    @property
    def discrepancy(self) -> float:
        return abs(self.relaxation - self.lift)


def extract_first_moments(
    solution: ConicSolution, rp: RelaxationProblem, lift_moments: np.ndarray | None = None
) -> list[MomentComparison]:
    """int t^a x^b y d(interior) for a + b <= 2d - 1, with lift values if given."""
    out = []
    for k in range(2 * rp.d):
        for a in range(k + 1):
            b = k - a
            c = rp.functional(TVAR**a * XVAR**b * YVAR)
            lift = float(c @ lift_moments) if lift_moments is not None else float("nan")
            out.append(MomentComparison(f"t^{a} x^{b} y", float(c @ solution.moments), lift))
    return out


# ---------------------------------------------------------------------------
# relaxation gap without the second-order identities


def counterexample_problem(bump: BumpSpec, inflate: float = 0.5, samples: int = 401) -> PdeProblem:
    """f = y^3, y0 = 0, boxes large enough for both atoms +-(g, g_t, g_x)."""
    g = bump.poly
    t = np.linspace(0.0, bump.T, samples)[:, None]
    x = np.linspace(0.0, 1.0, samples)[None, :]
    gmax = float(np.max(np.abs(g(t=t, x=x))))
    z0 = float(np.max(np.abs(g.diff("t")(t=t, x=x))))
    z1 = float(np.max(np.abs(g.diff("x")(t=t, x=x))))
    s = 1.0 + inflate
    return PdeProblem(bump.T, YVAR**3, Polynomial(), ybox=(-s * gmax, s * gmax), zbox=(s * z0, s * z1))


def is_second_order_row(row) -> bool:
    """PDE rows tested against y^c with c >= 1, and the dissipation rows."""
    if row.family == "dissipation":
        return True
    if row.family != "pde":
        return False
    c = int(row.label.split("y^")[1])
    return c >= 1


def bump_square_integral(bump: BumpSpec) -> float:
    """int int g^2 = A^2 T^9 B(5, 5)^2 with B(5, 5) = 1/630."""
    return bump.A**2 * bump.T**9 / 630.0**2


@dataclass(frozen=True)
class GapDemonstration:
    weakened_upper: float  # certified upper bound of int y^2, second-order rows dropped
    weakened_objective: float  # primal value reached
    bump_integral: float
    counterexample_residual: float  # max |A m - b| of the counterexample moments
    counterexample_min_eig: float  # smallest eigenvalue over its moment/localizing blocks
    counterexample_value: float  # int y^2 of the counterexample moments
    full_upper: float | None = None  # same bound with every row kept

    @property
    def gap_admitted(self) -> bool:
        return self.weakened_objective >= self.bump_integral


def counterexample_moments(rp: RelaxationProblem, bump: BumpSpec, order: int = 40) -> np.ndarray:
    """Moments of the two-atom occupation measure by tensor Gauss-Legendre quadrature.

    Every boundary measure of the bump field sits at y = z1 = 0, which matches
    the zero data, so those moments are the pure (t, x) integrals.
    """
    g = bump.poly
    gt, gx = g.diff("t"), g.diff("x")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    tq = 0.5 * bump.T * (nodes + 1.0)
    xq = 0.5 * (nodes + 1.0)
    W = np.outer(0.5 * bump.T * weights, 0.5 * weights)
    tt, xx = np.meshgrid(tq, xq, indexing="ij")
    atoms = [(g(t=tt, x=xx), gt(t=tt, x=xx), gx(t=tt, x=xx))]
    atoms.append(tuple(-a for a in atoms[0]))
    m = np.zeros(rp.layout.size)
    for spec in rp.layout.specs:
        cols = rp.layout.block(spec.name)
        for k, exp in enumerate(rp.layout.monomials[spec.name]):
            mono = Polynomial({exp: 1.0})
            if spec.name == "interior":
                poly = _unscale(mono, rp.scaling, spec)
                val = 0.0
                for y, z0, z1 in atoms:
                    val += 0.5 * float(np.sum(W * poly(t=tt, x=xx, y=y, z0=z0, z1=z1)))
            else:
                poly = _unscale(mono, rp.scaling, spec)
                var = "x" if "x" in spec.variables else "t"
                hi = 1.0 if var == "x" else bump.T
                q = 0.5 * hi * (nodes + 1.0)
                vals = np.broadcast_to(poly(**{var: q, "y": 0.0, "z1": 0.0}), q.shape)
                val = float(np.sum(0.5 * hi * weights * vals))
            m[cols.start + k] = val
    return m


def gap_demonstration(
    bump: BumpSpec | None = None,
    d: int = 3,
    opts: SolverOptions | None = None,
    with_full: bool = False,
) -> GapDemonstration:
    """Maximize int y^2 with the second-order rows removed and compare with int int g^2."""
    bump = bump or BumpSpec(4096.0, 0.5)
    opts = opts or default_options(d)
    problem = counterexample_problem(bump)
    full = assemble(problem, d, YVAR**2, sense="max")
    weak = full.drop(is_second_order_row)
    m_cex = counterexample_moments(weak, bump)
    resid = float(np.max(np.abs(weak.A @ m_cex - weak.b)))
    sol = solve(weak, opts)
    full_upper = solve(full, opts).info["certified_bound"] if with_full else None
    return GapDemonstration(
        weakened_upper=sol.info["certified_bound"],
        weakened_objective=sol.objective,
        bump_integral=bump_square_integral(bump),
        counterexample_residual=resid,
        counterexample_min_eig=min(min_eigenvalues(weak, m_cex).values()),
        counterexample_value=float(weak.objective @ m_cex),
        full_upper=full_upper,
    )

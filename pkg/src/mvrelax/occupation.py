"""Occupation measures on Q_T x Y x Z and boundary measures on dQ_T x Y x Z.

The interior measure is the grid Young field integrated against the trapezoid
rule on Q_T.  The boundary is split into dQ1 = {0} x [0,1], dQ2 = {T} x [0,1]
and dQ3 = [0,T] x {0,1}, each carrying atomic measures at the boundary nodes
integrated with the 1-D trapezoid rule.  Outward normals for n = 1:
eta = (-1, 0) on dQ1, (+1, 0) on dQ2, (0, -1) at x = 0 and (0, +1) at x = 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emv_verifier import ResidualReport
from .errors import GridMismatch
from .grid import SpaceTimeGrid, trapezoid_weights
from .pde_core import FieldSolution, PdeProblem, dissipation_integral
from .polynomial import Polynomial, graded_monomials, Z0 as Z0VAR, Z1 as Z1VAR
from .young_measure import YoungField, pair

COMPONENTS = ("dQ1", "dQ2", "dQ3")


@dataclass(frozen=True)
class BoundaryComponent:
    """Atoms along one boundary piece; node arrays have shape (n,), atoms (K, n)."""

    name: str
    t: np.ndarray
    x: np.ndarray
    quad: np.ndarray
    eta0: np.ndarray
    eta1: np.ndarray
    weights: np.ndarray
    y: np.ndarray
    z0: np.ndarray
    z1: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(self.weights.sum(axis=0) - 1.0)) > 1e-12:
            raise ValueError(f"{self.name}: atom weights must sum to 1 per node")
        if np.any(np.hypot(self.eta0, self.eta1) != 1.0):
            raise ValueError(f"{self.name}: normals must have unit length")

    def pair(self, g: Polynomial) -> np.ndarray:
        """Per-node sum_k w_k g(t, x, y_k, z0_k, z1_k)."""
        out = np.zeros(self.t.shape)
        if g.is_zero():
            return out
        for k in range(self.weights.shape[0]):
            out = out + self.weights[k] * g(t=self.t, x=self.x, y=self.y[k], z0=self.z0[k], z1=self.z1[k])
        return out

    def integrate(self, values: np.ndarray) -> float:
        return float(self.quad @ values)

    @property
    def mass(self) -> float:
        return float(self.quad.sum())


@dataclass(frozen=True)
class BoundaryDecomposition:
    """Node sets, normals and surface-measure weights of the three pieces."""

    grid: SpaceTimeGrid

    def nodes(self, name: str):
        g = self.grid
        nx, nt = g.Nx + 2, g.Nt + 1
        if name == "dQ1":
            return np.zeros(nx), g.x.copy(), trapezoid_weights(nx, g.dx), -np.ones(nx), np.zeros(nx)
        if name == "dQ2":
            return np.full(nx, g.T), g.x.copy(), trapezoid_weights(nx, g.dx), np.ones(nx), np.zeros(nx)
        if name == "dQ3":
            t = np.concatenate([g.t, g.t])
            x = np.concatenate([np.zeros(nt), np.ones(nt)])
            w = np.concatenate([trapezoid_weights(nt, g.dt)] * 2)
            eta1 = np.concatenate([-np.ones(nt), np.ones(nt)])
            return t, x, w, np.zeros(2 * nt), eta1
        raise ValueError(f"unknown boundary component {name!r}")

    def sigma(self, name: str) -> float:
        return {"dQ1": 1.0, "dQ2": 1.0, "dQ3": 2.0 * self.grid.T}[name]


@dataclass(frozen=True)
class OccupationLift:
    interior: YoungField
    boundary: dict[str, BoundaryComponent]

    @property
    def grid(self) -> SpaceTimeGrid:
        return self.interior.grid

    def masses(self) -> dict[str, float]:
        out = {"interior": self.grid.integrate(pair(self.interior, Polynomial.constant(1.0)))}
        for name in COMPONENTS:
            comp = self.boundary[name]
            out[name] = comp.integrate(comp.pair(Polynomial.constant(1.0)))
        return out

    def replace_interior(self, field: YoungField) -> "OccupationLift":
        if field.grid != self.grid:
            raise GridMismatch("interior field must live on the lift's grid")
        return OccupationLift(field, self.boundary)

    def write(self, directory: str | Path) -> list[Path]:
        """Interior Young-field CSV plus one CSV per boundary piece."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [self.interior.write(directory / "interior.csv")]
        for name, comp in self.boundary.items():
            K, n = comp.weights.shape
            rows = []
            for i in range(n):
                for k in range(K):
                    rows.append((comp.t[i], comp.x[i], k, comp.weights[k, i], comp.y[k, i], comp.z0[k, i], comp.z1[k, i]))
            path = directory / f"{name}.csv"
            np.savetxt(path, np.array(rows), delimiter=",", header="t,x,atom_index,weight,y,z0,z1", comments="", fmt="%.17g")
            paths.append(path)
        meta = {"grid": self.grid.to_dict(), "components": list(self.boundary)}
        (directory / "occupation.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return paths


def lift_occupation(field: YoungField, sol: FieldSolution, corner_owner: str = "time") -> OccupationLift:
    """Interior = ``field``; boundary atoms from the traces of ``sol``.

    dQ1/dQ2 carry (y, y_t, y_x) at t = 0 / T; dQ3 carries (0, 0, y_x).  Corner
    nodes belong to two pieces; ``corner_owner`` selects whose atom both use.
    """
    if field.grid != sol.grid:
        raise GridMismatch("field and solution grids differ")
    grid = sol.grid
    dec = BoundaryDecomposition(grid)
    nt = grid.Nt + 1
    comps = {}
    one = lambda n: np.ones((1, n))  # noqa: E731

    trace = {}
    for name, row in (("dQ1", 0), ("dQ2", -1)):
        trace[name] = [sol.y[row].copy(), sol.dty[row].copy(), sol.dxy[row].copy()]
    side = [np.zeros(2 * nt), np.zeros(2 * nt), np.concatenate([sol.dxy[:, 0], sol.dxy[:, -1]])]

    corner_nodes = {"dQ1": ([0, -1], [0, nt]), "dQ2": ([0, -1], [nt - 1, 2 * nt - 1])}
    for name, (time_idx, side_idx) in corner_nodes.items():
        for ti, si in zip(time_idx, side_idx):
            for c in range(3):
                if corner_owner == "time":
                    side[c][si] = trace[name][c][ti]
                elif corner_owner == "space":
                    trace[name][c][ti] = side[c][si]
                else:
                    raise ValueError("corner_owner must be 'time' or 'space'")

    for name in COMPONENTS:
        t, x, quad, eta0, eta1 = dec.nodes(name)
        y, z0, z1 = side if name == "dQ3" else trace[name]
        comps[name] = BoundaryComponent(
            name, t, x, quad, eta0, eta1, one(len(t)), y[None], z0[None], z1[None]
        )
    return OccupationLift(field, comps)


class PolyTimeFn:
    """Adapter giving a polynomial phi(t) the value/derivative interface."""

    def __init__(self, poly: Polynomial):
        if set(poly.variables) - {"t"}:
            raise ValueError("phi must be a polynomial in t")
        self.poly = poly

    def __call__(self, t):
        return self.poly(t=np.asarray(t, dtype=float)) if not self.poly.is_zero() else np.zeros_like(np.asarray(t, dtype=float))

    def deriv(self, t):
        d = self.poly.diff("t")
        return d(t=np.asarray(t, dtype=float)) if not d.is_zero() else np.zeros_like(np.asarray(t, dtype=float))


def _boundary_term(lift: OccupationLift, g: Polynomial, normal: str) -> float:
    total = 0.0
    for name in COMPONENTS:
        comp = lift.boundary[name]
        eta = getattr(comp, normal)
        if np.any(eta):
            total += comp.integrate(eta * comp.pair(g))
    return total


def occupation_ibp_residual(lift: OccupationLift, phi: Polynomial, direction: str) -> float:
    """int (d phi + z d_y phi) d mu  -  int phi eta d mu_boundary."""
    if direction == "time":
        integrand = phi.diff("t") + Z0VAR * phi.diff("y")
        normal = "eta0"
    elif direction == "space":
        integrand = phi.diff("x") + Z1VAR * phi.diff("y")
        normal = "eta1"
    else:
        raise ValueError("direction must be 'time' or 'space'")
    interior = lift.grid.integrate(pair(lift.interior, integrand))
    return interior - _boundary_term(lift, phi, normal)


def occupation_weak_residual(lift: OccupationLift, problem: PdeProblem, phi: Polynomial) -> float:
    """int phi (z0 - f) + (phi_x + z1 phi_y) z1 d mu  -  int phi z1 eta1 d mu_boundary."""
    integrand = phi * (Z0VAR - problem.f) + (phi.diff("x") + Z1VAR * phi.diff("y")) * Z1VAR
    interior = lift.grid.integrate(pair(lift.interior, integrand))
    return interior - _boundary_term(lift, phi * Z1VAR, "eta1")


def occupation_dissipation_residual(lift: OccupationLift, problem: PdeProblem, phi) -> float:
    """Dissipation identity with boundary term 1/2 phi z1^2 eta0; phi need not vanish.

    ``phi`` is a polynomial in t or any object with ``__call__`` and ``deriv``.
    """
    if isinstance(phi, Polynomial):
        phi = PolyTimeFn(phi)
    field = lift.interior
    interior = dissipation_integral(
        lift.grid, phi, pair(field, Z0VAR**2), pair(field, Z1VAR**2), pair(field, Z0VAR * problem.f)
    )
    boundary = 0.0
    for name in ("dQ1", "dQ2"):
        comp = lift.boundary[name]
        boundary += comp.integrate(0.5 * phi(comp.t) * comp.eta0 * comp.pair(Z1VAR**2))
    return interior + boundary


def occupation_suite(
    lift: OccupationLift,
    problem: PdeProblem,
    degree: int = 4,
    time_fns=None,
    tolerance: float | None = None,
) -> dict[str, ResidualReport]:
    """IBP, weak and dissipation identities.

    Monomials t^a x^b y^c of total degree <= ``degree`` feed the first three
    families; ``time_fns`` (default t^a, a <= ``degree``) feed the dissipation.
    """
    if time_fns is None:
        time_fns = [PolyTimeFn(Polynomial.monomial(t=a)) for a in range(degree + 1)]
    gd = lift.grid.to_dict()
    monos = graded_monomials(3, degree)
    out = {
        fam: ResidualReport(fam, basis_dims=(len(monos),), grid=gd, tolerance=tolerance)
        for fam in ("occ-ibp-time", "occ-ibp-space", "occ-weak")
    }
    for i, (a, b, c) in enumerate(monos):
        phi = Polynomial.monomial(t=a, x=b, y=c)
        out["occ-ibp-time"].entries.append(((i,), occupation_ibp_residual(lift, phi, "time")))
        out["occ-ibp-space"].entries.append(((i,), occupation_ibp_residual(lift, phi, "space")))
        out["occ-weak"].entries.append(((i,), occupation_weak_residual(lift, problem, phi)))
    if time_fns:
        diss = ResidualReport("occ-dissipation", basis_dims=(len(time_fns),), grid=gd, tolerance=tolerance)
        for i, phi in enumerate(time_fns):
            diss.entries.append(((i,), occupation_dissipation_residual(lift, problem, phi)))
        out["occ-dissipation"] = diss
    return out


def marginal_residuals(
    lift: OccupationLift,
    problem: PdeProblem,
    degree: int = 4,
    y0_values: np.ndarray | None = None,
) -> dict[str, ResidualReport]:
    """Initial, Dirichlet and normalization constraints on the boundary measures.

    Reference integrals use the same boundary nodes and trapezoid weights as
    the measures, so a lift built from a solution meets them to roundoff.
    """
    grid = lift.grid
    gd = grid.to_dict()
    monos = graded_monomials(3, degree)
    q1, q3 = lift.boundary["dQ1"], lift.boundary["dQ3"]
    if y0_values is None:
        y0_values = problem.y0(x=q1.x) if not problem.y0.is_zero() else np.zeros_like(q1.x)

    ic = ResidualReport("occ-ic", basis_dims=(len(monos),), grid=gd)
    bc = ResidualReport("occ-bc", basis_dims=(len(monos),), grid=gd)
    for i, (a, b, c) in enumerate(monos):
        phi = Polynomial.monomial(t=a, x=b, y=c)
        measure = q1.integrate(q1.pair(phi))
        target = q1.integrate(phi(t=np.zeros_like(q1.x), x=q1.x, y=y0_values))
        ic.entries.append(((i,), measure - target))
        measure = q3.integrate(q3.pair(phi))
        target = q3.integrate(phi(t=q3.t, x=q3.x, y=np.zeros_like(q3.t)))
        bc.entries.append(((i,), measure - target))

    norm = ResidualReport("occ-norm", grid=gd)
    for ci, name in enumerate(COMPONENTS):
        comp = lift.boundary[name]
        for i, (a, b) in enumerate(graded_monomials(2, degree)):
            psi = Polynomial.monomial(t=a, x=b)
            measure = comp.integrate(comp.pair(psi))
            target = comp.integrate(psi(t=comp.t, x=comp.x))
            norm.entries.append(((ci, i), measure - target))
    return {"occ-ic": ic, "occ-bc": bc, "occ-norm": norm}

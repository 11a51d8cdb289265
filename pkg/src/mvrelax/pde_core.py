"""Semilinear heat equation y_t - y_xx = f(t, x, y) on (0, T] x (0, 1).

Homogeneous Dirichlet data, polynomial reaction term and initial datum.  The
solver is a method-of-lines scheme (3-point Laplacian) with Crank-Nicolson or
implicit Euler in time and a Newton iteration on each step whose Jacobian is
tridiagonal.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import ConfigError, NewtonDivergence, SingularJacobian
from .grid import SpaceTimeGrid
from .polynomial import Polynomial
from .testfns import SpaceTestFn, TimeTestFn

log = logging.getLogger(__name__)

SCHEMES = ("crank-nicolson", "implicit-euler")
LIPSCHITZ_SAMPLES = 64


def estimate_one_sided_lipschitz(
    f: Polynomial, T: float, ybox: tuple[float, float], n: int = LIPSCHITZ_SAMPLES
) -> float:
    """max of df/dy over an n x n x n sample of [0,T] x [0,1] x ybox, clipped at 0."""
    dfdy = f.diff("y")
    if dfdy.is_zero():
        return 0.0
    t, x, y = np.meshgrid(
        np.linspace(0.0, T, n),
        np.linspace(0.0, 1.0, n),
        np.linspace(ybox[0], ybox[1], n),
        indexing="ij",
    )
    return max(0.0, float(np.max(dfdy(t=t, x=x, y=y))))


@dataclass(frozen=True)
class PdeProblem:
    """Problem data.  ``L_Y`` is estimated from ``f`` when left as ``None``.

    ``zbox`` holds the half-widths ``(Z0max, Z1max)`` of the symmetric box for
    ``(y_t, y_x)``.  ``r_exponent`` is recorded only.
    """

    T: float
    f: Polynomial
    y0: Polynomial
    ybox: tuple[float, float] = (-1.0, 1.0)
    zbox: tuple[float, float] = (10.0, 10.0)
    L_Y: float | None = None
    r_exponent: float = 2.0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive", "invalid-horizon")
        if set(self.f.variables) - {"t", "x", "y"}:
            raise ConfigError("f must be a polynomial in (t, x, y)", "invalid-reaction")
        if set(self.y0.variables) - {"x"}:
            raise ConfigError("y0 must be a polynomial in x", "invalid-initial-datum")
        # y0(0) is the constant coefficient; y0(1) is the coefficient sum.
        scale = max(1.0, *(abs(c) for c in self.y0.terms.values())) if not self.y0.is_zero() else 1.0
        at0 = self.y0.coefficient()
        at1 = sum(self.y0.terms.values())
        if abs(at0) > 1e-14 * scale or abs(at1) > 1e-12 * scale:
            raise ConfigError(
                f"y0 must vanish at x=0 and x=1 (got {at0:g}, {at1:g})", "ic-boundary-violation"
            )
        lo, hi = map(float, self.ybox)
        if not lo < hi:
            raise ConfigError("ybox must be a nonempty interval", "invalid-box")
        xs = np.linspace(0.0, 1.0, 1025)
        vals = self.y0(x=xs) if not self.y0.is_zero() else np.zeros_like(xs)
        if not (lo < vals.min() and vals.max() < hi):
            raise ConfigError("ybox must strictly contain the range of y0", "ybox-too-small")
        if min(self.zbox) <= 0:
            raise ConfigError("zbox half-widths must be positive", "invalid-box")
        object.__setattr__(self, "ybox", (lo, hi))
        object.__setattr__(self, "zbox", tuple(map(float, self.zbox)))
        estimate = estimate_one_sided_lipschitz(self.f, self.T, self.ybox)
        if self.L_Y is None:
            object.__setattr__(self, "L_Y", estimate)
        elif self.L_Y < estimate - 1e-12:
            raise ConfigError(
                f"L_Y={self.L_Y} is below the sampled max of df/dy ({estimate})", "lipschitz-too-small"
            )

    def with_boxes(self, ybox=None, zbox=None) -> "PdeProblem":
        """Copy with new boxes; L_Y is re-derived."""
        return replace(
            self,
            ybox=self.ybox if ybox is None else ybox,
            zbox=self.zbox if zbox is None else zbox,
            L_Y=None,
        )

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "f": self.f.to_dict(),
            "y0": self.y0.to_dict(),
            "ybox": list(self.ybox),
            "zbox": list(self.zbox),
            "L_Y": self.L_Y,
            "r_exponent": self.r_exponent,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FieldSolution:
    """Node values of y, y_t and y_x on ``grid`` (arrays are read-only)."""

    y: np.ndarray
    dty: np.ndarray
    dxy: np.ndarray
    grid: SpaceTimeGrid
    scheme: str = "crank-nicolson"
    range_escape: bool = False
    newton_iterations: int = 0
    problem_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("y", "dty", "dxy"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.grid.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_values(cls, y: np.ndarray, grid: SpaceTimeGrid, **kwargs) -> "FieldSolution":
        """Wrap tabulated values, filling derivatives by finite differences."""
        dty, dxy = compute_derivatives(y, grid)
        return cls(y, dty, dxy, grid, **kwargs)

    def header(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "scheme": self.scheme,
            "problem_hash": self.problem_hash,
            "range_escape": self.range_escape,
            "newton_iterations": self.newton_iterations,
            **self.meta,
        }

    def write(self, csv_path: str | Path, header_path: str | Path | None = None, extra: dict | None = None):
        """Columnar CSV (t, x, y, dty, dxy) plus a JSON header."""
        csv_path = Path(csv_path)
        g = self.grid
        cols = np.column_stack(
            [g.tt.ravel(), g.xx.ravel(), self.y.ravel(), self.dty.ravel(), self.dxy.ravel()]
        )
        np.savetxt(csv_path, cols, delimiter=",", header="t,x,y,dty,dxy", comments="", fmt="%.17g")
        header_path = Path(header_path) if header_path else csv_path.with_suffix(".json")
        header = self.header() | (extra or {})
        header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        return csv_path, header_path

    @classmethod
    def read(cls, csv_path: str | Path, header_path: str | Path | None = None) -> "FieldSolution":
        csv_path = Path(csv_path)
        header_path = Path(header_path) if header_path else csv_path.with_suffix(".json")
        header = json.loads(header_path.read_text())
        gd = header["grid"]
        grid = SpaceTimeGrid(gd["T"], gd["Nt"], gd["Nx"])
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        y, dty, dxy = (data[:, k].reshape(grid.shape) for k in (2, 3, 4))
        return cls(
            y, dty, dxy, grid,
            scheme=header["scheme"],
            range_escape=header["range_escape"],
            newton_iterations=header.get("newton_iterations", 0),
            problem_hash=header["problem_hash"],
        )


def compute_derivatives(y: np.ndarray, grid: SpaceTimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Second-order finite differences: central inside, one-sided at the edges."""
    y = np.asarray(y, dtype=float)
    dty = np.gradient(y, grid.dt, axis=0, edge_order=2)
    dxy = np.gradient(y, grid.dx, axis=1, edge_order=2)
    return dty, dxy


def _laplacian_apply(u: np.ndarray, dx: float) -> np.ndarray:
    """3-point Laplacian on interior values with zero Dirichlet data."""
    padded = np.concatenate(([0.0], u, [0.0]))
    return (padded[:-2] - 2.0 * u + padded[2:]) / dx**2


def solve(
    problem: PdeProblem,
    grid: SpaceTimeGrid,
    scheme: str = "crank-nicolson",
    newton_tol: float = 1e-11,
    newton_max_iter: int = 30,
    y0_values: np.ndarray | None = None,
) -> FieldSolution:
    """Time-step the PDE; ``y0_values`` overrides ``problem.y0`` with tabulated data.

    The Newton residual is measured on the step equation multiplied by dt, in
    the max norm over interior nodes.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if not newton_tol > 0:
        raise ValueError("newton_tol must be positive")
    if abs(grid.T - problem.T) > 1e-12 * problem.T:
        raise ValueError("grid horizon differs from problem horizon")

    theta = 0.5 if scheme == "crank-nicolson" else 1.0
    dt, dx = grid.dt, grid.dx
    xs = grid.x[1:-1]
    n = grid.Nx
    f = problem.f
    dfdy = f.diff("y")

    y = np.zeros(grid.shape)
    if y0_values is not None:
        y0 = np.asarray(y0_values, dtype=float)
        if y0.shape != (grid.Nx + 2,):
            raise ValueError("y0_values must be sampled on the spatial grid")
        y[0] = y0
    elif not problem.y0.is_zero():
        y[0] = problem.y0(x=grid.x)
    y[0, 0] = y[0, -1] = 0.0

    def reaction(t, u):
        return f(t=t, x=xs, y=u) if not f.is_zero() else np.zeros_like(u)

    def reaction_dy(t, u):
        return dfdy(t=t, x=xs, y=u) if not dfdy.is_zero() else np.zeros_like(u)

    off = -theta * dt / dx**2
    total_iters = 0
    for k in range(grid.Nt):
        t_old, t_new = grid.t[k], grid.t[k + 1]
        u_old = y[k, 1:-1]
        explicit = u_old.copy()
        if theta < 1.0:
            explicit += (1 - theta) * dt * (_laplacian_apply(u_old, dx) + reaction(t_old, u_old))

        u = u_old.copy()
        for it in range(newton_max_iter + 1):
            resid = u - theta * dt * (_laplacian_apply(u, dx) + reaction(t_new, u)) - explicit
            rnorm = float(np.max(np.abs(resid))) if n else 0.0
            if not np.isfinite(rnorm):
                raise NewtonDivergence(f"non-finite residual at step {k + 1}")
            if rnorm <= newton_tol:
                break
            if it == newton_max_iter:
                raise NewtonDivergence(
                    f"residual {rnorm:.3e} > {newton_tol:.1e} after {newton_max_iter} "
                    f"iterations at step {k + 1} (t={t_new:g})"
                )
            ab = np.empty((3, n))
            ab[0, :] = off
            ab[2, :] = off
            ab[1, :] = 1.0 + 2.0 * theta * dt / dx**2 - theta * dt * reaction_dy(t_new, u)
            try:
                delta = solve_banded((1, 1), ab, resid, check_finite=True)
            except (LinAlgError, ValueError) as exc:
                raise SingularJacobian(f"Newton Jacobian singular at step {k + 1}: {exc}") from exc
            if not np.all(np.isfinite(delta)):
                raise SingularJacobian(f"Newton Jacobian singular at step {k + 1}")
            u = u - delta
            total_iters += 1
        y[k + 1, 1:-1] = u

    lo, hi = problem.ybox
    escape = bool(np.any(y < lo) or np.any(y > hi))
    if escape:
        log.warning("solution left Ybox [%g, %g]: range [%g, %g]", lo, hi, y.min(), y.max())
    dty, dxy = compute_derivatives(y, grid)
    return FieldSolution(
        y, dty, dxy, grid,
        scheme=scheme,
        range_escape=escape,
        newton_iterations=total_iters,
        problem_hash=problem.digest(),
        meta={"initial": "tabulated" if y0_values is not None else "polynomial"},
    )


def with_observed_boxes(
    problem: PdeProblem, sol: FieldSolution, y_inflate: float = 0.2, z_inflate: float = 0.5
) -> PdeProblem:
    """Boxes from the observed ranges of ``sol``; L_Y is re-derived.

    The y-interval is widened about its midpoint by ``y_inflate`` of its width;
    each derivative half-width is the observed max magnitude times ``1 + z_inflate``.
    """
    lo, hi = float(sol.y.min()), float(sol.y.max())
    width = hi - lo
    pad = 0.5 * y_inflate * width if width > 0 else 1.0
    z0 = float(np.max(np.abs(sol.dty))) * (1 + z_inflate) or 1.0
    z1 = float(np.max(np.abs(sol.dxy))) * (1 + z_inflate) or 1.0
    return problem.with_boxes(ybox=(lo - pad, hi + pad), zbox=(z0, z1))


def solve_with_box_enlargement(problem: PdeProblem, grid: SpaceTimeGrid, **kwargs):
    """Solve once, inflate the observed range by 20%, re-derive L_Y, return both."""
    sol = solve(problem, grid, **kwargs)
    adjusted = with_observed_boxes(problem, sol)
    return adjusted, replace(sol, range_escape=False, problem_hash=adjusted.digest())


# ---------------------------------------------------------------------------
# residuals of the weak formulation and of the two energy identities


def weak_form_integral(
    grid: SpaceTimeGrid,
    v: SpaceTestFn,
    phi: TimeTestFn,
    d_t: np.ndarray,
    d_x: np.ndarray,
    source: np.ndarray,
) -> float:
    """Trapezoid value of  int int phi (v d_t + v' d_x - v source) dx dt."""
    vx = v(grid.x)[None, :]
    dvx = v.deriv(grid.x)[None, :]
    ph = phi(grid.t)[:, None]
    return grid.integrate(ph * (vx * d_t + dvx * d_x - vx * source))


def dissipation_integral(
    grid: SpaceTimeGrid,
    phi,
    z0_sq: np.ndarray,
    z1_sq: np.ndarray,
    z0_f: np.ndarray,
) -> float:
    """Trapezoid value of  int int phi <z0^2> - phi'/2 <z1^2> - phi <z0 f>."""
    ph = phi(grid.t)[:, None]
    dph = phi.deriv(grid.t)[:, None]
    return grid.integrate(ph * z0_sq - 0.5 * dph * z1_sq - ph * z0_f)


def _check_test_fns(grid: SpaceTimeGrid, v: SpaceTestFn | None, phi) -> None:
    if v is not None and max(abs(float(v(0.0))), abs(float(v(1.0)))) > 1e-12:
        raise ValueError("space test function must vanish at x=0 and x=1")
    if max(abs(float(phi(0.0))), abs(float(phi(grid.T)))) > 1e-12 * max(1.0, grid.T**4):
        raise ValueError("time test function must vanish at t=0 and t=T")


def _reaction(problem: PdeProblem, sol: FieldSolution) -> np.ndarray:
    if problem.f.is_zero():
        return np.zeros(sol.grid.shape)
    return problem.f(t=sol.grid.tt, x=sol.grid.xx, y=sol.y)


def weak_residual(sol: FieldSolution, problem: PdeProblem, v: SpaceTestFn, phi: TimeTestFn) -> float:
    _check_test_fns(sol.grid, v, phi)
    return weak_form_integral(sol.grid, v, phi, sol.dty, sol.dxy, _reaction(problem, sol))


def energy_residual_m2(sol: FieldSolution, problem: PdeProblem, v: SpaceTestFn, phi: TimeTestFn) -> float:
    """Residual of the identity obtained by testing with v*y (second moments)."""
    _check_test_fns(sol.grid, v, phi)
    y = sol.y
    source = 2.0 * (y * _reaction(problem, sol)) - 2.0 * sol.dxy**2
    return weak_form_integral(sol.grid, v, phi, 2.0 * y * sol.dty, 2.0 * y * sol.dxy, source)


def energy_residual_dissipation(sol: FieldSolution, problem: PdeProblem, phi: TimeTestFn) -> float:
    """Residual of the identity obtained by testing with y_t."""
    _check_test_fns(sol.grid, None, phi)
    return dissipation_integral(
        sol.grid, phi, sol.dty**2, sol.dxy**2, sol.dty * _reaction(problem, sol)
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GronwallResult:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ok: bool
    tol_discretization: float


def l2_norm_sq(grid: SpaceTimeGrid, values: np.ndarray) -> np.ndarray:
    """Trapezoid ||.||^2_{L^2(0,1)} of each time slice."""
    return np.asarray(values) ** 2 @ grid.wx


def gronwall_stability_check(
    problem: PdeProblem,
    grid: SpaceTimeGrid,
    perturbation: Polynomial,
    C_omega: float = np.pi**2,
    tol_discretization: float = 0.05,
    scheme: str = "crank-nicolson",
) -> GronwallResult:
    """Compare ||y1(t) - y2(t)||^2 with exp(2t(L_Y - C_omega)) ||y1(0) - y2(0)||^2."""
    if set(perturbation.variables) - {"x"}:
        raise ValueError("perturbation must be a polynomial in x")
    if abs(perturbation(x=0.0)) > 1e-14 or abs(perturbation(x=1.0)) > 1e-12:
        raise ValueError("perturbation must vanish at x=0 and x=1")
    base = solve(problem, grid, scheme=scheme)
    y0_pert = (problem.y0 + perturbation)(x=grid.x) if not (problem.y0 + perturbation).is_zero() else np.zeros(grid.Nx + 2)
    pert = solve(problem, grid, scheme=scheme, y0_values=y0_pert)
    lhs = l2_norm_sq(grid, base.y - pert.y)
    rhs = np.exp(2.0 * grid.t * (problem.L_Y - C_omega)) * lhs[0]
    ok = bool(np.all(lhs <= rhs * (1.0 + tol_discretization) + 1e-300))
    return GronwallResult(grid.t.copy(), lhs, rhs, ok, tol_discretization)

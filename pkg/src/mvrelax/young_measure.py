"""Atomic Young measures on Y x Z attached to the nodes of a space-time grid.

A :class:`YoungField` stores ``K`` atoms per node as stacked arrays of shape
``(K, Nt + 1, Nx + 2)``: weights and the coordinates ``(y, z0, z1)`` where
``z0`` stands for the time derivative and ``z1`` for the space derivative.
Integration in the measure variables is exact (finite sums).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatch
from .grid import SpaceTimeGrid
from .pde_core import FieldSolution, PdeProblem
from .polynomial import Polynomial, T as TVAR, X as XVAR, Y as YVAR, Z1 as Z1VAR

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Atom:
    y: float
    z0: float
    z1: float
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("atom weight must be positive")


@dataclass(frozen=True)
class CellMeasure:
    atoms: tuple[Atom, ...]

    def __post_init__(self):
        total = sum(a.weight for a in self.atoms)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"cell weights sum to {total!r}, not 1")

    def pair(self, g: Polynomial, t: float, x: float) -> float:
        return sum(a.weight * g(t=t, x=x, y=a.y, z0=a.z0, z1=a.z1) for a in self.atoms)


class YoungField:
    """Per-node atomic probability measures on a :class:`SpaceTimeGrid`."""

    def __init__(self, grid: SpaceTimeGrid, weights, y, z0, z1):
        arrays = []
        for name, arr in zip(("weights", "y", "z0", "z1"), (weights, y, z0, z1)):
            arr = np.array(arr, dtype=float)
            if arr.ndim == 2:
                arr = arr[None]
            if arr.shape[1:] != grid.shape:
                raise GridMismatch(f"{name} has node shape {arr.shape[1:]}, grid is {grid.shape}")
            arrays.append(arr)
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ValueError(f"atom arrays disagree in shape: {shapes}")
        w = arrays[0]
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if np.max(np.abs(w.sum(axis=0) - 1.0)) > WEIGHT_TOL:
            raise ValueError("cell weights must sum to 1")
        for a in arrays:
            a.setflags(write=False)
        self.grid = grid
        self.weights, self.y, self.z0, self.z1 = arrays

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[0]

    def cell(self, n: int, j: int) -> CellMeasure:
        return CellMeasure(
            tuple(
                Atom(self.y[k, n, j], self.z0[k, n, j], self.z1[k, n, j], self.weights[k, n, j])
                for k in range(self.n_atoms)
            )
        )

    def replace_atoms(self, **arrays) -> "YoungField":
        data = {"weights": self.weights, "y": self.y, "z0": self.z0, "z1": self.z1}
        data.update(arrays)
        return YoungField(self.grid, **data)

    def box_violations(self, ybox: tuple[float, float], zbox: tuple[float, float]) -> int:
        """Number of atoms outside Ybox x Zbox (recorded, never fatal)."""
        bad = (
            (self.y < ybox[0]) | (self.y > ybox[1])
            | (np.abs(self.z0) > zbox[0]) | (np.abs(self.z1) > zbox[1])
        )
        return int(bad.sum())

    def write(self, csv_path: str | Path, extra: dict | None = None):
        """CSV of (t, x, atom_index, weight, y, z0, z1) with a JSON header alongside."""
        csv_path = Path(csv_path)
        g = self.grid
        K = self.n_atoms
        idx = np.broadcast_to(np.arange(K)[:, None, None], self.weights.shape)
        tt = np.broadcast_to(g.tt, self.weights.shape)
        xx = np.broadcast_to(g.xx, self.weights.shape)
        # node-major, atom-minor row order
        cols = [np.moveaxis(a, 0, -1).ravel() for a in (tt, xx, idx, self.weights, self.y, self.z0, self.z1)]
        np.savetxt(
            csv_path, np.column_stack(cols), delimiter=",",
            header="t,x,atom_index,weight,y,z0,z1", comments="", fmt="%.17g",
        )
        header = {"grid": g.to_dict(), "n_atoms": K} | (extra or {})
        csv_path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        return csv_path

    @classmethod
    def read(cls, csv_path: str | Path) -> "YoungField":
        csv_path = Path(csv_path)
        header = json.loads(csv_path.with_suffix(".json").read_text())
        gd = header["grid"]
        grid = SpaceTimeGrid(gd["T"], gd["Nt"], gd["Nx"])
        K = header["n_atoms"]
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        cols = [np.moveaxis(data[:, c].reshape(grid.shape + (K,)), -1, 0) for c in (3, 4, 5, 6)]
        return cls(grid, *cols)


def _check_same_grid(a: SpaceTimeGrid, b: SpaceTimeGrid) -> None:
    if a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


def lift_dirac(sol: FieldSolution) -> YoungField:
    """One unit atom per node at (y, y_t, y_x)."""
    return YoungField(sol.grid, np.ones(sol.grid.shape), sol.y, sol.dty, sol.dxy)


def pair(field: YoungField, g: Polynomial) -> np.ndarray:
    """Node array of  sum_k w_k g(t, x, y_k, z0_k, z1_k)."""
    grid = field.grid
    out = np.zeros(grid.shape)
    if g.is_zero():
        return out
    for k in range(field.n_atoms):
        vals = g(t=grid.tt, x=grid.xx, y=field.y[k], z0=field.z0[k], z1=field.z1[k])
        out = out + field.weights[k] * vals
    return out


@dataclass(frozen=True)
class MomentFields:
    m1: np.ndarray
    m2: np.ndarray
    mf: np.ndarray
    mfhat: np.ndarray
    mz0: np.ndarray
    mz0sq: np.ndarray
    mzbarsq: np.ndarray


def moments(field: YoungField, problem: PdeProblem) -> MomentFields:
    f = problem.f
    m_yf = pair(field, YVAR * f)
    mzbarsq = pair(field, Z1VAR**2)
    return MomentFields(
        m1=pair(field, YVAR),
        m2=pair(field, YVAR**2),
        mf=pair(field, f),
        mfhat=2.0 * m_yf - 2.0 * mzbarsq,
        mz0=pair(field, Polynomial.var("z0")),
        mz0sq=pair(field, Polynomial.var("z0") ** 2),
        mzbarsq=mzbarsq,
    )


def squared_error_density(field: YoungField, ref: FieldSolution, method: str = "atoms") -> np.ndarray:
    """w = <mu, (y - y_ref)^2>, summed atom by atom or via m2 - 2 y_ref m1 + y_ref^2."""
    _check_same_grid(field.grid, ref.grid)
    if method == "atoms":
        return np.sum(field.weights * (field.y - ref.y[None]) ** 2, axis=0)
    if method == "moments":
        m1 = pair(field, YVAR)
        m2 = pair(field, YVAR**2)
        return m2 - 2.0 * ref.y * m1 + ref.y**2
    raise ValueError(f"unknown method {method!r}")


def weighted_error_density(w: np.ndarray, grid: SpaceTimeGrid, L_Y: float) -> np.ndarray:
    """exp(-2 t L_Y) w(t, x)."""
    return np.exp(-2.0 * grid.t * L_Y)[:, None] * np.asarray(w)


@dataclass(frozen=True)
class BumpSpec:
    """g(t, x) = A t^2 (T - t)^2 x^2 (1 - x)^2."""

    A: float
    T: float

    @property
    def poly(self) -> Polynomial:
        return self.A * TVAR**2 * (self.T - TVAR) ** 2 * XVAR**2 * (1 - XVAR) ** 2

    @property
    def peak(self) -> float:
        """Value at the center (T/2, 1/2): A (T/2)^4 / 16."""
        return self.A * (self.T / 2) ** 4 / 16


def counterexample_field(grid: SpaceTimeGrid, bump: BumpSpec) -> YoungField:
    """Two atoms of weight 1/2 at +-(g, g_t, g_x)."""
    g = bump.poly
    tt, xx = grid.tt, grid.xx
    gv = g(t=tt, x=xx)
    gt = g.diff("t")(t=tt, x=xx)
    gx = g.diff("x")(t=tt, x=xx)
    half = np.full(grid.shape, 0.5)
    return YoungField(
        grid,
        np.stack([half, half]),
        np.stack([gv, -gv]),
        np.stack([gt, -gt]),
        np.stack([gx, -gx]),
    )


def marginal_concentration_report(field: YoungField, ref: FieldSolution) -> tuple[float, float, float]:
    """sup-norms of <(y-y*)^2>, <(z1-y*_x)^2>, <(z0-y*_t)^2>."""
    _check_same_grid(field.grid, ref.grid)
    w = field.weights
    sup_w = np.max(np.sum(w * (field.y - ref.y[None]) ** 2, axis=0))
    sup_zbar = np.max(np.sum(w * (field.z1 - ref.dxy[None]) ** 2, axis=0))
    sup_z0 = np.max(np.sum(w * (field.z0 - ref.dty[None]) ** 2, axis=0))
    return float(sup_w), float(sup_zbar), float(sup_z0)

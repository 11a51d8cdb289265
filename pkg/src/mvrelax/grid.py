"""Uniform space-time grid on [0, T] x [0, 1] with trapezoid quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class SpaceTimeGrid:
    """``Nt`` time steps and ``Nx`` interior nodes; boundary nodes x=0, x=1 included.

    Node arrays have shape ``(Nt + 1, Nx + 2)`` throughout the package, with
    axis 0 for time and axis 1 for space.
    """

    T: float
    Nt: int
    Nx: int

    def __post_init__(self):
        if self.Nt < 2 or self.Nx < 2:
            raise ValueError(f"need Nt >= 2 and Nx >= 2, got {self.Nt}, {self.Nx}")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def dx(self) -> float:
        return 1.0 / (self.Nx + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nt + 1, self.Nx + 2)

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.Nx + 2)

    @cached_property
    def tt(self) -> np.ndarray:
        return np.broadcast_to(self.t[:, None], self.shape)

    @cached_property
    def xx(self) -> np.ndarray:
        return np.broadcast_to(self.x[None, :], self.shape)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True on the spatial boundary columns x=0 and x=1."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[:, 0] = mask[:, -1] = True
        return mask

    @cached_property
    def wt(self) -> np.ndarray:
        return trapezoid_weights(self.Nt + 1, self.dt)

    @cached_property
    def wx(self) -> np.ndarray:
        return trapezoid_weights(self.Nx + 2, self.dx)

    def integrate(self, values: np.ndarray) -> float:
        """Composite trapezoid rule over [0, T] x [0, 1]."""
        return float(self.wt @ np.asarray(values) @ self.wx)

    def refine(self, factor: int = 2) -> "SpaceTimeGrid":
        """Nested refinement: every coarse node is a fine node."""
        return SpaceTimeGrid(self.T, self.Nt * factor, (self.Nx + 1) * factor - 1)

    def to_dict(self) -> dict:
        return {"T": self.T, "Nt": self.Nt, "Nx": self.Nx, "dt": self.dt, "dx": self.dx}


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w

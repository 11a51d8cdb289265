"""Test functions in time, space and state used by the residual suites."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polynomial import Polynomial, T as TVAR, X as XVAR, Y as YVAR


@dataclass(frozen=True)
class TimeTestFn:
    """phi(t) vanishing at t=0 and t=T.

    ``poly-bump`` is ``t^2 (T-t)^2 q(t)``; ``sine`` is ``sin(k pi t / T)``.
    """

    kind: str
    T: float
    k: int = 1
    q: Polynomial = field(default_factory=lambda: Polynomial.constant(1.0))

    def __post_init__(self):
        if self.kind not in ("poly-bump", "sine"):
            raise ValueError(f"unknown time test function kind {self.kind!r}")
        if self.kind == "sine" and self.k < 1:
            raise ValueError("sine index must be >= 1")
        if set(self.q.variables) - {"t"}:
            raise ValueError("q must be a polynomial in t")

    @classmethod
    def poly_bump(cls, T: float, q: Polynomial | None = None) -> "TimeTestFn":
        return cls("poly-bump", T, q=q if q is not None else Polynomial.constant(1.0))

    @classmethod
    def sine(cls, T: float, k: int = 1) -> "TimeTestFn":
        return cls("sine", T, k=k)

    @property
    def poly(self) -> Polynomial | None:
        if self.kind != "poly-bump":
            return None
        return TVAR**2 * (self.T - TVAR) ** 2 * self.q

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "sine":
            return np.sin(self.k * np.pi * t / self.T)
        return self.poly(t=t)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "sine":
            w = self.k * np.pi / self.T
            return w * np.cos(w * t)
        return self.poly.diff("t")(t=t)

    def label(self) -> str:
        return f"sin({self.k}pi t/T)" if self.kind == "sine" else f"bump*{self.q!r}"


@dataclass(frozen=True)
class SpaceTestFn:
    """v(x) in H^1_0(0, 1): ``sin(k pi x)`` or ``x (1 - x) q(x)``."""

    kind: str
    k: int = 1
    q: Polynomial = field(default_factory=lambda: Polynomial.constant(1.0))

    def __post_init__(self):
        if self.kind not in ("poly-bump", "sine"):
            raise ValueError(f"unknown space test function kind {self.kind!r}")
        if self.kind == "sine" and self.k < 1:
            raise ValueError("sine index must be >= 1")
        if set(self.q.variables) - {"x"}:
            raise ValueError("q must be a polynomial in x")

    @classmethod
    def sine(cls, k: int = 1) -> "SpaceTestFn":
        return cls("sine", k=k)

    @classmethod
    def poly_bump(cls, q: Polynomial | None = None) -> "SpaceTestFn":
        return cls("poly-bump", q=q if q is not None else Polynomial.constant(1.0))

    @property
    def poly(self) -> Polynomial | None:
        if self.kind != "poly-bump":
            return None
        return XVAR * (1 - XVAR) * self.q

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            return np.sin(self.k * np.pi * x)
        return self.poly(x=x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            return self.k * np.pi * np.cos(self.k * np.pi * x)
        return self.poly.diff("x")(x=x)

    def label(self) -> str:
        return f"sin({self.k}pi x)" if self.kind == "sine" else f"x(1-x)*{self.q!r}"


@dataclass(frozen=True)
class StateTestFn:
    """beta(y), a polynomial in y; beta' is derived."""

    beta: Polynomial
    max_degree: int = 6

    def __post_init__(self):
        if set(self.beta.variables) - {"y"}:
            raise ValueError("beta must be a polynomial in y")
        if self.beta.degree() > self.max_degree:
            raise ValueError(f"beta degree exceeds {self.max_degree}")

    @property
    def dbeta(self) -> Polynomial:
        return self.beta.diff("y")

    def label(self) -> str:
        return repr(self.beta)


def time_basis(T: float, n: int, kind: str = "poly-bump") -> list[TimeTestFn]:
    """``t^2 (T-t)^2 (t/T)^k`` or ``sin(k pi t/T)``; the first poly-bump is t^2(T-t)^2."""
    if kind == "sine":
        return [TimeTestFn.sine(T, k) for k in range(1, n + 1)]
    return [TimeTestFn.poly_bump(T, (TVAR / T) ** k) for k in range(n)]


def space_basis(n: int, kind: str = "sine") -> list[SpaceTestFn]:
    if kind == "sine":
        return [SpaceTestFn.sine(k) for k in range(1, n + 1)]
    return [SpaceTestFn.poly_bump(XVAR**k) for k in range(n)]


def state_basis(max_degree: int = 3) -> list[StateTestFn]:
    return [StateTestFn(YVAR**k) for k in range(max_degree + 1)]

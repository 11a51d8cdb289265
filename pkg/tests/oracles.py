"""Independent reference values built from closed forms and Gauss-Legendre quadrature.

Nothing here uses the package's polynomial class or its trapezoid rules.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

t_, x_ = sp.symbols("t x", real=True)


def gauss_2d(fn, T: float, n: int = 120) -> float:
    """Tensor Gauss-Legendre rule for int_0^T int_0^1 fn(t, x) dx dt."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    tq = 0.5 * T * (nodes + 1.0)
    xq = 0.5 * (nodes + 1.0)
    tt, xx = np.meshgrid(tq, xq, indexing="ij")
    W = np.outer(0.5 * T * weights, 0.5 * weights)
    return float(np.sum(W * fn(tt, xx)))


def heat_exact(t, x):
    return np.exp(-np.pi**2 * t) * np.sin(np.pi * x)


def heat_exact_dx(t, x):
    return np.pi * np.exp(-np.pi**2 * t) * np.cos(np.pi * x)


def heat_integral_parabola(T: float, terms: int = 400) -> float:
    """int_0^T int_0^1 y dx dt for y_t = y_xx, y(0) = x(1 - x), by the sine series."""
    total = 0.0
    for k in range(1, 2 * terms, 2):
        kp = k * np.pi
        bk = 8.0 / kp**3
        total += bk * (2.0 / kp) * (1.0 - np.exp(-kp**2 * T)) / kp**2
    return total


def bump_symbols(A: float, T: float):
    """g = A t^2 (T - t)^2 x^2 (1 - x)^2 with g_t and g_x, as sympy expressions."""
    g = A * t_**2 * (T - t_) ** 2 * x_**2 * (1 - x_) ** 2
    return g, sp.diff(g, t_), sp.diff(g, x_)


def m2_weak_bump(A: float, T: float, n: int = 120) -> float:
    """m2 weak entry of the two-atom field for f = y^3, v = sin(pi x), phi = t^2 (T - t)^2."""
    g, gt, gx = bump_symbols(A, T)
    phi = t_**2 * (T - t_) ** 2
    v = sp.sin(sp.pi * x_)
    integrand = phi * (v * 2 * g * gt + sp.diff(v, x_) * 2 * g * gx + 2 * v * gx**2 - 2 * v * g**4)
    return gauss_2d(sp.lambdify((t_, x_), integrand, "numpy"), T, n)


def bump_weighted_square(A: float, T: float, L_Y: float, source, n: int = 120) -> float:
    """int int exp(-2 t L_Y) g^2 source(t, x) dx dt."""
    g, _, _ = bump_symbols(A, T)
    gfun = sp.lambdify((t_, x_), g, "numpy")
    return gauss_2d(lambda t, x: np.exp(-2.0 * t * L_Y) * gfun(t, x) ** 2 * source(t, x), T, n)


def bump_square(A: float, T: float) -> float:
    g, _, _ = bump_symbols(sp.Rational(A), sp.Rational(T))  # exact arithmetic
    r = sp.integrate(sp.integrate(g**2, (x_, 0, 1)), (t_, 0, sp.Rational(T)))
    return r.p / r.q

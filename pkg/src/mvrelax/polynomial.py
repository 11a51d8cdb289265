"""Sparse multivariate polynomials in the variables ``t, x, y, z0, z1``.

Every polynomial lives over the same ordered variable tuple :data:`VARS`;
a term is an exponent 5-tuple mapped to a float coefficient.  Polynomials
that only use a subset (e.g. ``f(t, x, y)`` or ``y0(x)``) simply carry zero
exponents in the unused slots.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from typing import Iterable, Mapping

import numpy as np

VARS = ("t", "x", "y", "z0", "z1")
NVARS = len(VARS)

Exponent = tuple[int, int, int, int, int]


def _index(var: str) -> int:
    try:
        return VARS.index(var)
    except ValueError:
        raise ValueError(f"unknown variable {var!r}; expected one of {VARS}") from None


def graded_monomials(nvars: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples in ``nvars`` variables of total degree <= ``degree``.

    Ordering is graded lexicographic: by total degree, then lexicographically
    descending in the exponents (so ``x0`` before ``x1`` within a degree).
    """
    out: list[tuple[int, ...]] = []
    for deg in range(degree + 1):
        block = [
            e
            for e in itertools.product(range(deg, -1, -1), repeat=nvars)
            if sum(e) == deg
        ]
        out.extend(block)
    return out


class Polynomial:
    """Immutable sparse polynomial over :data:`VARS`."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[tuple[int, ...], float] | None = None):
        clean: dict[Exponent, float] = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != NVARS:
                raise ValueError(f"exponent {exp} must have length {NVARS}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            coef = float(coef)
            if coef != 0.0:
                clean[exp] = clean.get(exp, 0.0) + coef
        self._terms = {e: c for e, c in clean.items() if c != 0.0}

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "Polynomial":
        return cls({(0,) * NVARS: c})

    @classmethod
    def var(cls, name: str) -> "Polynomial":
        exp = [0] * NVARS
        exp[_index(name)] = 1
        return cls({tuple(exp): 1.0})

    @classmethod
    def monomial(cls, coef: float = 1.0, **powers: int) -> "Polynomial":
        exp = [0] * NVARS
        for name, p in powers.items():
            exp[_index(name)] = p
        return cls({tuple(exp): coef})

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "Polynomial":
        """Parse ``{"t^1 x^0 y^2": 3.0}``-style keys produced by :meth:`to_dict`."""
        terms = {}
        for key, coef in data.items():
            exp = [0] * NVARS
            for tok in key.split():
                if tok == "1":
                    continue
                name, _, p = tok.partition("^")
                exp[_index(name)] = int(p or 1)
            terms[tuple(exp)] = coef
        return cls(terms)

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        """Parse an expression such as ``"y - y**3"`` or ``"x*(1-x)"``."""
        import sympy

        symbols = sympy.symbols(VARS)
        local = dict(zip(VARS, symbols))
        expr = sympy.sympify(text, locals=local)
        unknown = expr.free_symbols - set(symbols)
        if unknown:
            raise ValueError(f"unknown symbols in {text!r}: {sorted(map(str, unknown))}")
        try:
            poly = sympy.Poly(sympy.expand(expr), *symbols)
        except sympy.PolynomialError:
            raise ValueError(f"{text!r} is not a polynomial") from None
        return cls({exp: float(c) for exp, c in poly.terms()})

    # basic protocol ---------------------------------------------------------

    @property
    def terms(self) -> dict[Exponent, float]:
        return dict(self._terms)

    @property
    def variables(self) -> tuple[str, ...]:
        used = [any(e[i] for e in self._terms) for i in range(NVARS)]
        return tuple(v for v, u in zip(VARS, used) if u)

    def degree(self, var: str | None = None) -> int:
        if not self._terms:
            return 0
        if var is None:
            return max(sum(e) for e in self._terms)
        i = _index(var)
        return max(e[i] for e in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, **powers: int) -> float:
        exp = [0] * NVARS
        for name, p in powers.items():
            exp[_index(name)] = p
        return self._terms.get(tuple(exp), 0.0)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def __repr__(self) -> str:
        if not self._terms:
            return "Polynomial(0)"
        parts = []
        for exp, c in sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), kv[0])):
            mono = "*".join(
                f"{v}^{p}" if p > 1 else v for v, p in zip(VARS, exp) if p
            )
            parts.append(f"{c:g}*{mono}" if mono else f"{c:g}")
        return "Polynomial(" + " + ".join(parts) + ")"

    def to_dict(self) -> dict[str, float]:
        out = {}
        for exp, c in sorted(self._terms.items()):
            key = " ".join(f"{v}^{p}" for v, p in zip(VARS, exp) if p) or "1"
            out[key] = c
        return out

    def digest(self) -> str:
        payload = json.dumps(sorted((list(e), c) for e, c in self._terms.items()))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # arithmetic -----------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for e, c in other._terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[Exponent, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(terms)

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        return self * (1.0 / float(other))

    def __pow__(self, n: int):
        if n < 0 or int(n) != n:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(1.0)
        base = self
        n = int(n)
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def diff(self, var: str) -> "Polynomial":
        i = _index(var)
        terms = {}
        for e, c in self._terms.items():
            if e[i]:
                new = list(e)
                new[i] -= 1
                terms[tuple(new)] = c * e[i]
        return Polynomial(terms)

    def substitute(self, **subs: "Polynomial | float") -> "Polynomial":
        """Compose: replace each named variable by a polynomial (or number)."""
        idx = {_index(k): self._coerce(v) for k, v in subs.items()}
        out = Polynomial()
        power_cache: dict[tuple[int, int], Polynomial] = {}

        def power(i: int, p: int) -> Polynomial:
            key = (i, p)
            if key not in power_cache:
                power_cache[key] = idx[i] ** p
            return power_cache[key]

        for e, c in self._terms.items():
            rest = list(e)
            term = Polynomial.constant(c)
            for i in idx:
                if e[i]:
                    term = term * power(i, e[i])
                rest[i] = 0
            term = term * Polynomial({tuple(rest): 1.0})
            out = out + term
        return out

    # evaluation -------------------------------------------------------------

    def __call__(self, **values) -> np.ndarray | float:
        """Evaluate with keyword arrays; unspecified variables must be unused."""
        arrays = {}
        for name, val in values.items():
            arrays[_index(name)] = np.asarray(val, dtype=float)
        missing = [v for v in self.variables if _index(v) not in arrays]
        if missing:
            raise ValueError(f"missing values for {missing}")
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        out = np.zeros(shape)
        # powers by repeated products: np.power is not exactly odd, and
        # sign symmetries of atom pairs must cancel to zero
        pow_cache: dict[tuple[int, int], np.ndarray] = {}

        def power(i: int, p: int) -> np.ndarray:
            if (i, p) not in pow_cache:
                pow_cache[(i, p)] = arrays[i] if p == 1 else power(i, p - 1) * arrays[i]
            return pow_cache[(i, p)]

        for e, c in self._terms.items():
            term = np.full(shape, c)
            for i, p in enumerate(e):
                if p:
                    term = term * power(i, p)
            out = out + term
        return out if shape else float(out)

    def integrate(self, var: str, lo: float, hi: float) -> "Polynomial":
        """Exact definite integral in one variable."""
        i = _index(var)
        terms = {}
        for e, c in self._terms.items():
            p = e[i] + 1
            new = list(e)
            new[i] = 0
            terms[tuple(new)] = terms.get(tuple(new), 0.0) + c * (hi**p - lo**p) / p
        return Polynomial(terms)


def poly_sum(items: Iterable[Polynomial]) -> Polynomial:
    out = Polynomial()
    for p in items:
        out = out + p
    return out


T = Polynomial.var("t")
X = Polynomial.var("x")
Y = Polynomial.var("y")
Z0 = Polynomial.var("z0")
Z1 = Polynomial.var("z1")

"""Moment relaxation of the occupation-measure identities.

Five measures carry moment vectors: the interior measure on (t, x, y, z0, z1)
and four boundary pieces.  The boundary integrands never involve z0, so the
boundary measures live on reduced variable sets with the pinned coordinate
substituted: dQ1 (t = 0) and dQ2 (t = T) on (x, y, z1); the two halves of dQ3
(x = 0 and x = 1) on (t, y, z1).

Each variable v with box [lo, hi] is optionally rewritten as
v = c + h s with s in [-1, 1] (c = (lo + hi)/2, h = (hi - lo)/2) before the
integrands are expanded, so moments are those of the scaled variables.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from ..errors import DegreeOverflow
from ..pde_core import PdeProblem
from ..polynomial import VARS, Polynomial, graded_monomials

log = logging.getLogger(__name__)

IDENTITY_FAMILIES = ("ibp-time", "ibp-space", "pde", "dissipation", "ic", "bc", "normalization")


@dataclass(frozen=True, order=True)
class MonomialIndex:
    """t^a x^b y^c z0^d z1^e."""

    exponents: tuple[int, int, int, int, int]

    def __post_init__(self):
        if len(self.exponents) != 5 or any(e < 0 for e in self.exponents):
            raise ValueError(f"invalid exponents {self.exponents}")

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def label(self) -> str:
        parts = [f"{v}^{e}" for v, e in zip(VARS, self.exponents) if e]
        return " ".join(parts) or "1"


@dataclass(frozen=True)
class MeasureSpec:
    name: str
    variables: tuple[str, ...]
    pinned: tuple[tuple[str, float], ...] = ()
    sigma: float = 1.0  # total mass

    def embed(self, local: tuple[int, ...]) -> tuple[int, ...]:
        exp = [0] * 5
        for v, e in zip(self.variables, local):
            exp[VARS.index(v)] = e
        return tuple(exp)


def measure_specs(T: float, reduce: bool = True) -> tuple[MeasureSpec, ...]:
    """With ``reduce``, y is eliminated where the data pin it (see :func:`assemble`)."""
    side = ("t", "z1") if reduce else ("t", "y", "z1")
    pin = (("y", 0.0),) if reduce else ()
    start = ("x", "z1") if reduce else ("x", "y", "z1")
    return (
        MeasureSpec("interior", VARS, (), T),
        MeasureSpec("dQ1", start, (("t", 0.0),), 1.0),
        MeasureSpec("dQ2", ("x", "y", "z1"), (("t", T),), 1.0),
        MeasureSpec("dQ3-left", side, (("x", 0.0),) + pin, T),
        MeasureSpec("dQ3-right", side, (("x", 1.0),) + pin, T),
    )


class MomentLayout:
    """Column numbering of all moments of degree <= 2d, measure by measure."""

    def __init__(self, specs: tuple[MeasureSpec, ...], d: int):
        self.specs = specs
        self.d = d
        self.offsets: dict[str, int] = {}
        self.monomials: dict[str, list[tuple[int, ...]]] = {}
        self._index: dict[str, dict[tuple[int, ...], int]] = {}
        n = 0
        for s in specs:
            monos = [s.embed(e) for e in graded_monomials(len(s.variables), 2 * d)]
            self.offsets[s.name] = n
            self.monomials[s.name] = monos
            self._index[s.name] = {e: n + i for i, e in enumerate(monos)}
            n += len(monos)
        self.size = n

    def column(self, measure: str, exp: tuple[int, ...]) -> int:
        try:
            return self._index[measure][exp]
        except KeyError:
            raise DegreeOverflow(f"moment {MonomialIndex(exp).label()} of {measure} exceeds degree {2 * self.d}") from None

    def spec(self, name: str) -> MeasureSpec:
        return next(s for s in self.specs if s.name == name)

    def block(self, name: str) -> slice:
        start = self.offsets[name]
        return slice(start, start + len(self.monomials[name]))


@dataclass(frozen=True)
class Scaling:
    """v = center + half * s for every variable."""

    center: dict
    half: dict

    @classmethod
    def from_boxes(cls, boxes: dict, rescale: bool) -> "Scaling":
        if not rescale:
            return cls({v: 0.0 for v in VARS}, {v: 1.0 for v in VARS})
        return cls(
            {v: 0.5 * (lo + hi) for v, (lo, hi) in boxes.items()},
            {v: 0.5 * (hi - lo) for v, (lo, hi) in boxes.items()},
        )

    def apply(self, poly: Polynomial, spec: MeasureSpec) -> Polynomial:
        """Pin the fixed coordinate, then express in scaled variables."""
        if spec.pinned:
            poly = poly.substitute(**dict(spec.pinned))
        subs = {
            v: self.center[v] + self.half[v] * Polynomial.var(v)
            for v in spec.variables
            if (self.center[v], self.half[v]) != (0.0, 1.0)
        }
        return poly.substitute(**subs) if subs else poly


@dataclass
class Row:
    family: str
    label: str
    coefs: dict[int, float]
    rhs: float


@dataclass
class PsdBlock:
    """svec(M) = op @ m for a symmetric matrix of order ``size``."""

    name: str
    measure: str
    size: int
    op: sp.csr_matrix


@dataclass
class RelaxationProblem:
    d: int
    layout: MomentLayout
    scaling: Scaling
    boxes: dict
    rows: list[Row]
    blocks: list[PsdBlock]
    objective: np.ndarray
    objective_poly: Polynomial
    sense: str
    skipped: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def A(self) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for r, row in enumerate(self.rows):
            for c, v in row.coefs.items():
                ri.append(r)
                ci.append(c)
                data.append(v)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), self.layout.size))

    @property
    def b(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows], dtype=float)

    @property
    def L(self) -> sp.csr_matrix:
        return sp.vstack([blk.op for blk in self.blocks]).tocsr()

    def counts(self) -> dict[str, int]:
        out = {fam: 0 for fam in IDENTITY_FAMILIES}
        for row in self.rows:
            out[row.family] += 1
        return out

    def functional(self, poly: Polynomial, measure: str = "interior") -> np.ndarray:
        """Coefficient vector c with c @ m = int poly d(measure)."""
        return _functional(self.layout, self.scaling, poly, measure)

    def drop(self, predicate: Callable[[Row], bool]) -> "RelaxationProblem":
        """Copy without the rows for which ``predicate`` is true."""
        kept = [r for r in self.rows if not predicate(r)]
        return RelaxationProblem(
            self.d, self.layout, self.scaling, self.boxes, kept, self.blocks,
            self.objective, self.objective_poly, self.sense, list(self.skipped),
        )

    def with_objective(self, poly: Polynomial, sense: str) -> "RelaxationProblem":
        _check_sense(sense)
        c = self.functional(poly)
        return RelaxationProblem(
            self.d, self.layout, self.scaling, self.boxes, self.rows, self.blocks,
            c, poly, sense, list(self.skipped),
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.A.toarray().tobytes())
        h.update(self.b.tobytes())
        h.update(self.objective.tobytes())
        return h.hexdigest()[:16]


def _check_sense(sense: str) -> None:
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")


def _functional(layout: MomentLayout, scaling: Scaling, poly: Polynomial, measure: str) -> np.ndarray:
    c = np.zeros(layout.size)
    spec = layout.spec(measure)
    for exp, coef in scaling.apply(poly, spec).terms.items():
        c[layout.column(measure, exp)] += coef
    return c


def _boxes(problem: PdeProblem) -> dict:
    z0, z1 = problem.zbox
    return {
        "t": (0.0, problem.T),
        "x": (0.0, 1.0),
        "y": tuple(problem.ybox),
        "z0": (-z0, z0),
        "z1": (-z1, z1),
    }


def _box_polynomials(boxes: dict, spec: MeasureSpec, scaling: Scaling) -> list[tuple[str, Polynomial]]:
    """(hi - v)(v - lo) per free variable, normalized by half-width^2 when scaled."""
    out = []
    for v in spec.variables:
        lo, hi = boxes[v]
        g = (hi - Polynomial.var(v)) * (Polynomial.var(v) - lo)
        g = scaling.apply(g, MeasureSpec(spec.name, spec.variables)) / scaling.half[v] ** 2
        out.append((v, g))
    return out


def _svec_operator(layout: MomentLayout, spec: MeasureSpec, basis, weight: Polynomial) -> sp.csr_matrix:
    n = len(basis)
    data, ri, ci = [], [], []
    r = 0
    for i in range(n):
        for j in range(i, n):
            scale = 1.0 if i == j else np.sqrt(2.0)
            base = tuple(a + b for a, b in zip(basis[i], basis[j]))
            for exp, coef in weight.terms.items():
                e = tuple(a + b for a, b in zip(base, exp))
                ri.append(r)
                ci.append(layout.column(spec.name, e))
                data.append(scale * coef)
            r += 1
    return sp.csr_matrix((data, (ri, ci)), shape=(r, layout.size))


def psd_blocks(layout: MomentLayout, boxes: dict, scaling: Scaling) -> list[PsdBlock]:
    d = layout.d
    blocks = []
    for spec in layout.specs:
        nv = len(spec.variables)
        basis = [spec.embed(e) for e in graded_monomials(nv, d)]
        op = _svec_operator(layout, spec, basis, Polynomial.constant(1.0))
        blocks.append(PsdBlock(f"{spec.name}:moment", spec.name, len(basis), op))
        if d < 1:
            continue
        loc_basis = [spec.embed(e) for e in graded_monomials(nv, d - 1)]
        for v, g in _box_polynomials(boxes, spec, scaling):
            op = _svec_operator(layout, spec, loc_basis, g)
            blocks.append(PsdBlock(f"{spec.name}:box-{v}", spec.name, len(loc_basis), op))
    return blocks


class _RowBuilder:
    def __init__(self, layout: MomentLayout, scaling: Scaling, y0=None):
        self.layout = layout
        self.scaling = scaling
        self.y0 = y0  # set when the initial measure is reduced
        self._ic_cache: dict[tuple[int, int], float] = {}
        self.rows: list[Row] = []
        self.skipped: list[tuple[str, str, str]] = []

    def initial_part(self, poly: Polynomial) -> tuple[Polynomial, float]:
        """Split a dQ1 integrand into its z1-part and the known value of the rest."""
        poly = poly.substitute(t=0.0)
        known = 0.0
        rest = {}
        for (a, b, c, d0, e), coef in poly.terms.items():
            if e == 0:
                key = (b, c)
                if key not in self._ic_cache:
                    self._ic_cache[key] = initial_moment(self.y0, b, c)
                known += coef * self._ic_cache[key]
            elif c == 0:
                rest[(a, b, c, d0, e)] = coef
            else:
                raise ValueError("initial integrand couples y and z1")
        return Polynomial(rest), known

    def add(self, family: str, label: str, parts: list[tuple[str, Polynomial]], rhs: float) -> None:
        coefs: dict[int, float] = {}
        try:
            for measure, poly in parts:
                spec = self.layout.spec(measure)
                if measure == "dQ1" and self.y0 is not None:
                    poly, known = self.initial_part(poly)
                    rhs -= known
                for exp, c in self.scaling.apply(poly, spec).terms.items():
                    col = self.layout.column(measure, exp)
                    coefs[col] = coefs.get(col, 0.0) + c
        except DegreeOverflow as err:
            self.skipped.append((family, label, str(err)))
            log.info("skipped %s row %s: %s", family, label, err)
            return
        coefs = {k: v for k, v in coefs.items() if v != 0.0}
        if not coefs and rhs == 0.0:
            return
        self.rows.append(Row(family, label, coefs, float(rhs)))


def initial_moment(y0, b: int, c: int) -> float:
    """int_0^1 x^b y0(x)^c dx: exact for a polynomial y0, adaptive quadrature otherwise."""
    if isinstance(y0, Polynomial):
        integrand = Polynomial.monomial(x=b) * y0**c
        return float(integrand.integrate("x", 0.0, 1.0).terms.get((0, 0, 0, 0, 0), 0.0))
    val, _ = integrate.quad(lambda x: x**b * y0(x) ** c, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


def assemble(
    problem: PdeProblem,
    d: int,
    objective: Polynomial,
    sense: str = "min",
    rescale: bool = True,
    y0=None,
    reduce: bool = True,
) -> RelaxationProblem:
    """Instantiate the occupation identities on monomial test functions.

    ``y0`` overrides the initial datum by a callable (e.g. ``sin(pi x)``); the
    IC moments are then computed by adaptive quadrature.

    With ``reduce`` (default) the variable y is eliminated where the data pin
    it: on the lateral pieces y = 0 is substituted, and on dQ1 every z1-free
    moment is replaced by its known value int phi(0, x, y0(x)) dx, leaving a
    measure in (x, z1).  Without it the initial and Dirichlet rows appear
    explicitly and the corresponding moment matrices are forced singular,
    which leaves no strictly feasible point and slows first-order solvers.
    """
    _check_sense(sense)
    if d < 1:
        raise ValueError("relaxation degree must be >= 1")
    f = problem.f
    deg_f = f.degree() if not f.is_zero() else 0
    if objective.degree() > 2 * d:
        raise DegreeOverflow(f"objective degree {objective.degree()} exceeds 2d = {2 * d}")
    if max(1, deg_f) + 1 > 2 * d:
        raise DegreeOverflow(f"no PDE row fits: deg f = {deg_f}, 2d = {2 * d}")
    y0 = problem.y0 if y0 is None else y0
    T = problem.T
    boxes = _boxes(problem)
    layout = MomentLayout(measure_specs(T, reduce), d)
    scaling = Scaling.from_boxes(boxes, rescale)
    rb = _RowBuilder(layout, scaling, y0 if reduce else None)
    Z0, Z1 = Polynomial.var("z0"), Polynomial.var("z1")

    for a, b, c in graded_monomials(3, 2 * d):
        phi = Polynomial.monomial(t=a, x=b, y=c)
        deg = a + b + c
        label = f"t^{a} x^{b} y^{c}"
        dy = phi.diff("y")
        if deg + 1 <= 2 * d:
            # eta0 = -1 on dQ1, +1 on dQ2
            rb.add("ibp-time", label, [
                ("interior", phi.diff("t") + Z0 * dy),
                ("dQ1", phi),
                ("dQ2", -phi),
            ], 0.0)
            # eta1 = -1 at x = 0, +1 at x = 1
            rb.add("ibp-space", label, [
                ("interior", phi.diff("x") + Z1 * dy),
                ("dQ3-left", phi),
                ("dQ3-right", -phi),
            ], 0.0)
        if deg + max(1, deg_f) + 1 <= 2 * d:
            rb.add("pde", label, [
                ("interior", phi * (Z0 - f) + (phi.diff("x") + Z1 * dy) * Z1),
                ("dQ3-left", phi * Z1),
                ("dQ3-right", -phi * Z1),
            ], 0.0)

    for a in range(2 * d - 1):
        phi = Polynomial.monomial(t=a)
        dphi = phi.diff("t")
        rb.add("dissipation", f"t^{a}", [
            ("interior", phi * Z0**2 - 0.5 * dphi * Z1**2 - phi * Z0 * f),
            ("dQ1", -0.5 * phi * Z1**2),
            ("dQ2", 0.5 * phi * Z1**2),
        ], 0.0)

    for b, c in graded_monomials(2, 2 * d) if not reduce else ():
        rb.add("ic", f"x^{b} y^{c}", [("dQ1", Polynomial.monomial(x=b, y=c))], initial_moment(y0, b, c))
    for side in ("dQ3-left", "dQ3-right"):
        for a, c in graded_monomials(2, 2 * d):
            rhs = T ** (a + 1) / (a + 1) if c == 0 else 0.0
            rb.add("bc", f"{side} t^{a} y^{c}", [(side, Polynomial.monomial(t=a, y=c))], rhs)
    for spec in layout.specs[1:]:
        var = "x" if "x" in spec.variables else "t"
        hi = 1.0 if var == "x" else T
        for k in range(2 * d + 1):
            rb.add("normalization", f"{spec.name} {var}^{k}", [(spec.name, Polynomial.monomial(**{var: k}))],
                   hi ** (k + 1) / (k + 1))

    blocks = psd_blocks(layout, boxes, scaling)
    c = _functional(layout, scaling, objective, "interior")
    return RelaxationProblem(d, layout, scaling, boxes, rb.rows, blocks, c, objective, sense, rb.skipped)


def lift_moments(rp: RelaxationProblem, lift) -> np.ndarray:
    """Moment vector of an :class:`~mvrelax.occupation.OccupationLift` by quadrature."""
    from ..young_measure import pair

    m = np.zeros(rp.layout.size)
    grid = lift.grid
    sides = {"dQ1": ("dQ1", None), "dQ2": ("dQ2", None), "dQ3-left": ("dQ3", 0.0), "dQ3-right": ("dQ3", 1.0)}
    for spec in rp.layout.specs:
        cols = rp.layout.block(spec.name)
        for k, exp in enumerate(rp.layout.monomials[spec.name]):
            mono = Polynomial({exp: 1.0})
            # monomial in scaled variables -> polynomial in original ones
            poly = _unscale(mono, rp.scaling, spec)
            if spec.name == "interior":
                m[cols.start + k] = grid.integrate(pair(lift.interior, poly))
            else:
                comp_name, xval = sides[spec.name]
                comp = lift.boundary[comp_name]
                vals = comp.pair(poly)
                if xval is not None:
                    vals = np.where(comp.x == xval, vals, 0.0)
                m[cols.start + k] = comp.integrate(vals)
    return m


def _unscale(poly: Polynomial, scaling: Scaling, spec: MeasureSpec) -> Polynomial:
    subs = {
        v: (Polynomial.var(v) - scaling.center[v]) / scaling.half[v]
        for v in spec.variables
        if (scaling.center[v], scaling.half[v]) != (0.0, 1.0)
    }
    return poly.substitute(**subs) if subs else poly


def reference_moments(rp: RelaxationProblem) -> np.ndarray:
    """Moments of the uniform measure on each box (mass = sigma), in solver coordinates."""
    m = np.zeros(rp.layout.size)
    for spec in rp.layout.specs:
        cols = rp.layout.block(spec.name)
        for k, exp in enumerate(rp.layout.monomials[spec.name]):
            val = spec.sigma
            for v in spec.variables:
                p = exp[VARS.index(v)]
                if rp.scaling.half[v] != 1.0 or rp.scaling.center[v] != 0.0:
                    lo, hi = -1.0, 1.0
                else:
                    lo, hi = rp.boxes[v]
                val *= (hi ** (p + 1) - lo ** (p + 1)) / ((p + 1) * (hi - lo))
            m[cols.start + k] = val
    return m

"""Conic solvers for :class:`RelaxationProblem`.

The default backend is an operator-splitting (ADMM) method on

    min  c.m   s.t.  A m = b,  L m = s,  s in K = S+ x ... x S+,

where ``L`` stacks the svec maps of the moment and localizing matrices.  The
m-update is an equality-constrained least-squares step solved with a cached
sparse factorization of its KKT matrix; the s-update projects each block onto
the PSD cone by eigenvalue clipping.  Redundant equality rows are removed
once by a pivoted QR, which also detects inconsistent systems.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import config
from ..errors import NumericalBreakdown
from ..polynomial import VARS
from .assembly import RelaxationProblem, reference_moments

log = logging.getLogger(__name__)

STATUSES = ("optimal", "max-iters", "infeasible-detected")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = config.SOLVER_TOL
    max_iters: int = config.SOLVER_MAX_ITERS
    rho: float = config.SOLVER_RHO
    alpha: float = 1.6
    adapt_every: int = 500
    certify_every: int = 200
    check_every: int = 10
    time_limit: float | None = None
    backend: str = "admm"
    record_history: bool = False
    anderson_memory: int = 10
    anderson_safeguard: float = 2.0


@dataclass
class ConicSolution:
    moments: np.ndarray
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    eq_residual: float
    psd_violation: float
    iterations: int
    seconds: float
    reported_eq_residual: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "status": self.status,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "eq_residual": self.eq_residual,
            "psd_violation": self.psd_violation,
            "iterations": self.iterations,
        }


_SVEC_CACHE: dict[int, tuple] = {}


def _svec_index(n: int) -> tuple:
    if n not in _SVEC_CACHE:
        iu = np.triu_indices(n)
        off = iu[0] != iu[1]
        scale = np.where(off, np.sqrt(2.0), 1.0)
        _SVEC_CACHE[n] = (iu, scale)
    return _SVEC_CACHE[n]


def _svec_to_mat(v: np.ndarray, n: int) -> np.ndarray:
    (r, c), scale = _svec_index(n)
    M = np.empty((n, n))
    vals = v / scale
    M[r, c] = vals
    M[c, r] = vals
    return M


def _mat_to_svec(M: np.ndarray) -> np.ndarray:
    (r, c), scale = _svec_index(M.shape[-1])
    return M[..., r, c] * scale


def project_psd(v: np.ndarray, n: int) -> np.ndarray:
    w, U = np.linalg.eigh(_svec_to_mat(v, n))
    w = np.maximum(w, 0.0)
    return _mat_to_svec((U * w) @ U.T)


def min_eigenvalues(rp: RelaxationProblem, m: np.ndarray) -> dict[str, float]:
    return {
        blk.name: float(np.linalg.eigvalsh(_svec_to_mat(blk.op @ m, blk.size))[0])
        for blk in rp.blocks
    }


def independent_rows(A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
    """Indices of a maximal independent row subset and a consistency flag."""
    if A.shape[0] == 0:
        return np.arange(0), True
    _, R, piv = la.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size else 0
    keep = np.sort(piv[:rank])
    x, *_ = la.lstsq(A[keep], b[keep])
    resid = np.max(np.abs(A @ x - b)) if b.size else 0.0
    scale = max(1.0, float(np.max(np.abs(b))))
    return keep, bool(resid <= 1e-8 * scale)


def residuals(rp: RelaxationProblem, m: np.ndarray) -> tuple[float, float]:
    """(max |A m - b|, max negative eigenvalue part), recomputed from scratch."""
    A, b = rp.A, rp.b
    eq = float(np.max(np.abs(A @ m - b))) if b.size else 0.0
    psd = max(0.0, -min(min_eigenvalues(rp, m).values()))
    return eq, psd


def _block_matrices(blk, columns: np.ndarray) -> np.ndarray:
    """Stacked symmetric F_j with M(m) = sum_j m_j F_j, one per listed column."""
    n = blk.size
    (r, c), scale = _svec_index(n)
    cols = blk.op.tocsc()[:, columns].toarray().T / scale
    F = np.zeros((len(columns), n, n))
    F[:, r, c] = cols
    F[:, c, r] = cols
    return F


def _preconditioned_operator(rp: RelaxationProblem, mode: str = "cholesky") -> sp.csr_matrix:
    """Stack svec(C_k M_k(m) C_k^T) for congruences C_k that keep each cone unchanged.

    ``diagonal``: C_k = diag(M_k(m_ref))^(-1/2).  ``cholesky``: C_k = R_k^(-T)
    with M_k(m_ref) = R_k^T R_k, so every block is the identity at the uniform
    reference measure (an orthonormal polynomial basis).
    """
    m_ref = reference_moments(rp)
    ops = []
    for blk in rp.blocks:
        n = blk.size
        iu = np.triu_indices(n)
        ref = _svec_to_mat(blk.op @ m_ref, n)
        if mode == "diagonal" or n == 1:
            diag = np.diag(ref)
            if np.any(diag <= 0):
                raise NumericalBreakdown(f"reference block {blk.name} has a nonpositive diagonal")
            dscale = 1.0 / np.sqrt(diag)
            ops.append(sp.diags(dscale[iu[0]] * dscale[iu[1]]) @ blk.op)
            continue
        try:
            Rinv = la.solve_triangular(la.cholesky(ref), np.eye(n))
        except la.LinAlgError as err:
            raise NumericalBreakdown(f"reference block {blk.name} is not positive definite") from err
        cols = np.unique(blk.op.indices)
        transformed = Rinv.T @ _block_matrices(blk, cols) @ Rinv
        data = _mat_to_svec(transformed).T
        data[np.abs(data) < 1e-14 * np.abs(data).max()] = 0.0
        rows, k = np.nonzero(data)
        ops.append(sp.csr_matrix((data[rows, k], (rows, cols[k])), shape=(data.shape[0], rp.layout.size)))
    return sp.vstack(ops).tocsr()


class _Kkt:
    def __init__(self, P: sp.csc_matrix, A: sp.csc_matrix):
        self.P, self.A = P, A
        self.n, self.p = P.shape[0], A.shape[0]
        self.rho = None
        self.lu = None

    def factor(self, rho: float) -> None:
        K = sp.bmat([[rho * self.P, self.A.T], [self.A, None]], format="csc")
        try:
            self.lu = spla.splu(K)
        except RuntimeError as err:
            raise NumericalBreakdown(f"KKT factorization failed: {err}") from err
        self.rho = rho

    def solve(self, rhs_m: np.ndarray, b: np.ndarray) -> np.ndarray:
        sol = self.lu.solve(np.concatenate([rhs_m, b]))
        return sol[: self.n], sol[self.n:]


def _admm(rp: RelaxationProblem, opts: SolverOptions, warm_start: np.ndarray | None) -> ConicSolution:
    t0 = time.perf_counter()
    A_full, b_full = rp.A.toarray(), rp.b
    keep, consistent = independent_rows(A_full, b_full)
    n = rp.layout.size
    if not consistent:
        m = la.lstsq(A_full[keep], b_full[keep])[0] if keep.size else np.zeros(n)
        eq, psd = residuals(rp, m)
        return ConicSolution(m, float(rp.objective @ m), "infeasible-detected", np.inf, np.inf, eq, psd, 0,
                             time.perf_counter() - t0, info={"reason": "inconsistent equality rows"})
    A = sp.csc_matrix(A_full[keep])
    b = b_full[keep]
    L = _preconditioned_operator(rp).tocsc()
    LT = L.T.tocsr()
    sizes = [blk.size for blk in rp.blocks]
    bounds = np.cumsum([0] + [s * (s + 1) // 2 for s in sizes])

    sign = 1.0 if rp.sense == "min" else -1.0
    cnorm = max(1e-12, float(np.linalg.norm(rp.objective)))
    c = sign * rp.objective / cnorm

    P = (LT @ L).tocsc()
    kkt = _Kkt(P, A)
    rho = opts.rho
    kkt.factor(rho)

    def proj(v):
        out = np.empty_like(v)
        for k, s in enumerate(sizes):
            sl = slice(bounds[k], bounds[k + 1])
            out[sl] = project_psd(v[sl], s)
        return out

    mbound = _moment_bounds(rp)

    def fixed_point_map(v):
        s = proj(v)
        lam = v - s
        m, nu = kkt.solve(-c + rho * (LT @ (2.0 * s - v)), b)
        Lm = L @ m
        return opts.alpha * Lm + (1.0 - opts.alpha) * s + lam, (m, nu, Lm, s, lam)

    if warm_start is not None:
        v = L @ np.asarray(warm_start, dtype=float)
    else:
        v = L @ kkt.solve(np.zeros(n), b)[0]
    Fv, aux = fixed_point_map(v)
    g = Fv - v
    aa = _Anderson(opts.anderson_memory)
    status = "max-iters"
    it = 0
    history = []
    r_prim = r_dual = gap = np.inf
    best = -np.inf
    for it in range(1, opts.max_iters + 1):
        v_new = aa.extrapolate(Fv, g) if opts.anderson_memory else Fv
        Fv_new, aux_new = fixed_point_map(v_new)
        g_new = Fv_new - v_new
        if aa.used and np.linalg.norm(g_new) > opts.anderson_safeguard * np.linalg.norm(g):
            aa.reset()
            v_new = Fv
            Fv_new, aux_new = fixed_point_map(v_new)
            g_new = Fv_new - v_new
        aa.push(v_new - v, g_new - g)
        v, Fv, g, aux = v_new, Fv_new, g_new, aux_new

        if it % opts.check_every == 0 or it == opts.max_iters:
            m, nu, Lm, s, lam = aux
            diff = Lm - s
            r_prim = float(np.linalg.norm(diff))
            r_dual = float(rho * np.linalg.norm(LT @ diff))
            pobj, dobj = float(c @ m), float(-b @ nu)
            gap = abs(pobj - dobj)
            eps_p = opts.tol * (1.0 + max(np.linalg.norm(Lm), np.linalg.norm(s)))
            eps_d = opts.tol * (1.0 + np.linalg.norm(c))
            eps_g = opts.tol * (1.0 + abs(pobj) + abs(dobj))
            if opts.record_history:
                history.append((it, float(rp.objective @ m), r_prim / eps_p, r_dual / eps_d, gap / eps_g, rho))
            if r_prim <= eps_p and r_dual <= eps_d and gap <= eps_g:
                status = "optimal"
                break
            if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
                break
            if it % opts.certify_every == 0:
                m_, nu_, _, _, lam_ = aux
                best = max(best, _certified_bound(c, A, b, L, LT, kkt, -nu_, -rho * lam_, sizes, bounds, mbound))
            if it % opts.adapt_every == 0:
                # rebalance only on a clear imbalance, by at most a decade
                ratio = (r_prim / eps_p) / max(r_dual / eps_d, 1e-300)
                if ratio > 5.0 or ratio < 0.2:
                    new_rho = float(np.clip(rho * np.clip(np.sqrt(ratio), 0.1, 10.0), 1e-6, 1e6))
                    # keep s and lam; v = s + lam rescales through lam
                    v = s + lam * (rho / new_rho)
                    rho = new_rho
                    kkt.factor(rho)
                    aa.reset()
                    Fv, aux = fixed_point_map(v)
                    g = Fv - v

    m, nu, Lm, s, lam = aux
    best = max(best, _certified_bound(c, A, b, L, LT, kkt, -nu, -rho * lam, sizes, bounds, mbound))
    certified = cnorm * best
    eq, psd = residuals(rp, m)
    reported = float(np.max(np.abs(A_full @ m - b_full))) if b_full.size else 0.0
    return ConicSolution(
        moments=m,
        objective=float(rp.objective @ m),
        status=status,
        primal_residual=r_prim,
        dual_residual=r_dual,
        eq_residual=eq,
        psd_violation=psd,
        iterations=it,
        seconds=time.perf_counter() - t0,
        reported_eq_residual=reported,
        info={
            "rho": rho,
            "rank": int(keep.size),
            "rows": int(b_full.size),
            "gap": gap,
            "certified_bound": sign * certified,
            "history": history,
        },
    )


def _certified_bound(c, A, b, L, LT, kkt, y, Z, sizes, bounds, mbound) -> float:
    """Valid lower bound on min c.m from an approximate dual pair (y, Z).

    The dual residual r = c - A^T y - L^T Z is absorbed by a correction solved
    with the cached KKT factorization, A^T dy + L^T dZ = r.  Weak duality then
    gives c.m >= b.(y + dy) + sum_k min(0, lambda_min(W_k)) tr(X_k) - |r'|.mbound
    with W = Z + dZ, X = L m, the trace bounded over the moment box and r' the
    roundoff left after the correction.
    """
    r = c - A.T @ y - LT @ Z
    w, dy = kkt.solve(r, np.zeros(A.shape[0]))
    y = y + dy
    W = Z + kkt.rho * (L @ w)
    r = c - A.T @ y - LT @ W
    bound = float(b @ y) - float(np.abs(r) @ mbound)
    for k, n in enumerate(sizes):
        sl = slice(bounds[k], bounds[k + 1])
        lam_min = float(np.linalg.eigvalsh(_svec_to_mat(W[sl], n))[0])
        if lam_min < 0.0:
            (rr, cc), _ = _svec_index(n)
            diag = np.flatnonzero(rr == cc) + bounds[k]
            trace_row = np.asarray(L[diag].sum(axis=0)).ravel()
            bound += lam_min * float(np.abs(trace_row) @ mbound)
    return bound


class _Anderson:
    """Type-II Anderson acceleration on a fixed-point iteration v <- F(v)."""

    def __init__(self, memory: int):
        self.memory = memory
        self.dv: list[np.ndarray] = []
        self.dg: list[np.ndarray] = []
        self.used = False

    def reset(self) -> None:
        self.dv.clear()
        self.dg.clear()

    def push(self, dv: np.ndarray, dg: np.ndarray) -> None:
        if not self.memory:
            return
        self.dv.append(dv)
        self.dg.append(dg)
        if len(self.dv) > self.memory:
            self.dv.pop(0)
            self.dg.pop(0)

    def extrapolate(self, Fv: np.ndarray, g: np.ndarray) -> np.ndarray:
        self.used = False
        if not self.dv:
            return Fv
        G = np.column_stack(self.dg)
        GtG = G.T @ G
        # Tikhonov-regularized normal equations
        reg = 1e-10 * max(float(np.trace(GtG)), 1e-300)
        try:
            gamma = la.solve(GtG + reg * np.eye(GtG.shape[0]), G.T @ g, assume_a="pos")
        except (la.LinAlgError, ValueError):
            return Fv
        if not np.all(np.isfinite(gamma)):
            return Fv
        self.used = True
        return Fv - (np.column_stack(self.dv) + G) @ gamma


def _moment_bounds(rp: RelaxationProblem) -> np.ndarray:
    """|m_j| <= sigma * max over the box of |monomial_j|."""
    out = np.zeros(rp.layout.size)
    for spec in rp.layout.specs:
        cols = rp.layout.block(spec.name)
        for k, exp in enumerate(rp.layout.monomials[spec.name]):
            val = spec.sigma
            for v in spec.variables:
                if rp.scaling.half[v] != 1.0 or rp.scaling.center[v] != 0.0:
                    continue  # rescaled variable lives in [-1, 1]
                val *= max(abs(rp.boxes[v][0]), abs(rp.boxes[v][1])) ** exp[VARS.index(v)]
            out[cols.start + k] = val
    return out


def _cvxpy(rp: RelaxationProblem, opts: SolverOptions) -> ConicSolution:
    """External interior-point cross-check (requires the optional cvxpy extra)."""
    import cvxpy as cp

    t0 = time.perf_counter()
    m = cp.Variable(rp.layout.size)
    cons = [rp.A @ m == rp.b]
    for blk in rp.blocks:
        n = blk.size
        iu = np.triu_indices(n)
        scale = np.where(iu[0] == iu[1], 1.0, 1.0 / np.sqrt(2.0))
        entries = sp.diags(scale) @ blk.op
        # scatter the upper triangle into a symmetric matrix expression
        idx = np.ravel_multi_index(iu, (n, n))
        idx_t = np.ravel_multi_index((iu[1], iu[0]), (n, n))
        S = sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n * n, len(idx)))
        St = sp.csr_matrix((np.ones(len(idx)), (idx_t, np.arange(len(idx)))), shape=(n * n, len(idx)))
        off = sp.diags((iu[0] != iu[1]).astype(float))
        full = (S + St @ off) @ entries
        X = cp.reshape(full @ m, (n, n), order="C")
        cons.append(0.5 * (X + X.T) >> 0)
    obj = rp.objective @ m
    prob = cp.Problem(cp.Minimize(obj) if rp.sense == "min" else cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if m.value is None:
        return ConicSolution(np.zeros(rp.layout.size), np.nan, "infeasible-detected", np.inf, np.inf,
                             np.inf, np.inf, 0, time.perf_counter() - t0, info={"cvxpy": prob.status})
    mv = np.asarray(m.value)
    eq, psd = residuals(rp, mv)
    status = "optimal" if prob.status == cp.OPTIMAL else ("infeasible-detected" if "infeasible" in prob.status else "max-iters")
    return ConicSolution(mv, float(rp.objective @ mv), status, psd, 0.0, eq, psd, 0,
                         time.perf_counter() - t0, reported_eq_residual=eq, info={"cvxpy": prob.status})


def default_options(d: int, **overrides) -> SolverOptions:
    """Defaults with the iteration budget of degree ``d``."""
    iters = config.SOLVER_ITERS_BY_DEGREE.get(d, config.SOLVER_MAX_ITERS)
    return SolverOptions(**({"max_iters": iters} | overrides))


def solve(rp: RelaxationProblem, opts: SolverOptions | None = None, warm_start=None) -> ConicSolution:
    opts = opts or SolverOptions()
    if opts.backend == "admm":
        return _admm(rp, opts, warm_start)
    if opts.backend == "cvxpy":
        return _cvxpy(rp, opts)
    raise ValueError(f"unknown backend {opts.backend!r}")

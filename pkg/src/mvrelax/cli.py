"""Command-line entry point: ``mvrelax {solve,verify,relax,convergence}``.

Runs are described by a TOML file; every key has a default (see
:data:`DEFAULTS`) and unknown keys are rejected.  Flags override the file.
Artifacts are CSV/JSON only, carry the hash of the resolved configuration and
contain no timings, so identical configurations give identical bytes.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.  Errors are
reported as a JSON object on stderr (and ``error.json`` in the output
directory when it can be created).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as constants
from .emv_verifier import (
    apply_tolerances,
    emv_residual_suite,
    ibp_residual_suite,
    mv_residual_suite,
)
from .errors import ConfigError, MvRelaxError
from .grid import SpaceTimeGrid
from .occupation import lift_occupation, marginal_residuals, occupation_suite
from .pde_core import PdeProblem, solve, with_observed_boxes
from .polynomial import Polynomial
from .testfns import space_basis, state_basis, time_basis
from .young_measure import BumpSpec, counterexample_field, lift_dirac

log = logging.getLogger("mvrelax")

COMMANDS = ("solve", "verify", "relax", "convergence")
SUITES = ("mv", "emv", "ibp", "occupation")

DEFAULTS: dict = {
    "problem": {
        "T": 0.5,
        "f": "0",  # polynomial in t, x, y
        "y0": "x*(1 - x)",  # polynomial in x, or any expression (tabulated)
        "ybox": [-1.0, 1.0],
        "zbox": [10.0, 10.0],  # half-widths for (y_t, y_x)
        "L_Y": None,  # estimated from f when absent
        "auto_boxes": True,  # replace boxes by the observed ranges, inflated
    },
    "grid": {"Nt": 64, "Nx": 63, "scheme": "crank-nicolson"},
    "field": {"kind": "dirac", "bump_A": 4096.0},  # or "counterexample"
    "suite": {
        "names": list(SUITES),
        "time_basis": 6,
        "space_basis": 6,
        "state_degree": 3,
        "occupation_degree": 4,
    },
    "relax": {
        "degrees": [2, 3, 4],
        "objectives": {"int_y": "y"},
        "max_iters": 0,  # 0: per-degree default budget
        "reference_grid": 256,
        "reduce": True,
        "rescale": True,
    },
    "tolerances": {"solver_tol": constants.SOLVER_TOL},
    "convergence": {
        "levels": 3,
        "order_min": 1.7,
        "order_max": 2.3,
        "families": ["solution", "ibp-time", "ibp-space", "m1-weak", "m2-weak", "dissipation"],
    },
    "output": {"dir": "out"},
}

# keys whose values are free-form tables
_OPEN_TABLES = {("relax", "objectives")}


@dataclass(frozen=True)
class RunConfig:
    data: dict

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def digest(self) -> str:
        """Hash of everything except the output location."""
        payload = {k: v for k, v in self.data.items() if k != "output"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _merge(base: dict, update: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        here = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown configuration key {'.'.join(here)!r}", "unknown-key")
        if isinstance(base[key], dict) and here not in _OPEN_TABLES:
            if not isinstance(val, dict):
                raise ConfigError(f"{'.'.join(here)!r} must be a table", "invalid-value")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    import tomli

    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            raw = tomli.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"configuration file {path} not found", "config-not-found") from None
        except tomli.TOMLDecodeError as err:
            raise ConfigError(f"invalid TOML: {err}", "config-parse") from None
        data = _merge(data, raw)
    if overrides:
        data = _merge(data, overrides)
    _validate(data)
    return RunConfig(data)


def _validate(data: dict) -> None:
    g = data["grid"]
    if g["scheme"] not in ("crank-nicolson", "implicit-euler"):
        raise ConfigError(f"unknown scheme {g['scheme']!r}", "invalid-scheme")
    if int(g["Nt"]) < 2 or int(g["Nx"]) < 2:
        raise ConfigError("grid needs Nt >= 2 and Nx >= 2", "invalid-grid")
    for name in data["suite"]["names"]:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}", "invalid-suite")
    if data["field"]["kind"] not in ("dirac", "counterexample"):
        raise ConfigError(f"unknown field kind {data['field']['kind']!r}", "invalid-field")
    if data["convergence"]["levels"] < 2:
        raise ConfigError("convergence study needs at least 2 levels", "invalid-value")


def parse_grid(text: str) -> dict:
    try:
        nt, nx = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid expects NtxNx, got {text!r}", "invalid-grid") from None
    return {"Nt": nt, "Nx": nx}


# ---------------------------------------------------------------------------
# problem construction


def _parse_poly(text: str, what: str) -> Polynomial:
    try:
        return Polynomial.parse(str(text))
    except Exception as err:  # sympy raises a variety of types
        raise ConfigError(f"cannot parse {what} {text!r}: {err}", f"invalid-{what}") from None


def initial_datum(text: str):
    """(polynomial or None, vectorized callable) for an initial datum expression."""
    import sympy

    x = sympy.Symbol("x")
    try:
        expr = sympy.sympify(str(text), locals={"x": x})
    except (sympy.SympifyError, TypeError) as err:
        raise ConfigError(f"cannot parse y0 {text!r}: {err}", "invalid-y0") from None
    if expr.free_symbols - {x}:
        raise ConfigError("y0 may only depend on x", "invalid-y0")
    if expr.is_polynomial(x):
        poly = _parse_poly(text, "y0")
        return poly, (lambda xs: poly(x=np.asarray(xs, dtype=float)) if not poly.is_zero() else 0.0 * np.asarray(xs))
    fn = sympy.lambdify(x, expr, "numpy")
    if abs(float(fn(0.0))) > 1e-12 or abs(float(fn(1.0))) > 1e-12:
        raise ConfigError("y0 must vanish at x=0 and x=1", "ic-boundary-violation")
    return None, (lambda xs: np.broadcast_to(fn(np.asarray(xs, dtype=float)), np.shape(xs)).astype(float))


@dataclass(frozen=True)
class Setup:
    problem: PdeProblem
    grid: SpaceTimeGrid
    scheme: str
    y0_fn: object
    tabulated: bool

    def y0_values(self, grid: SpaceTimeGrid | None = None):
        grid = grid or self.grid
        return np.asarray(self.y0_fn(grid.x), dtype=float) if self.tabulated else None


def build(cfg: RunConfig, grid: SpaceTimeGrid | None = None) -> Setup:
    p = cfg["problem"]
    f = _parse_poly(p["f"], "f")
    poly, fn = initial_datum(p["y0"])
    kwargs = dict(ybox=tuple(p["ybox"]), zbox=tuple(p["zbox"]))
    if p["L_Y"] is not None:
        kwargs["L_Y"] = float(p["L_Y"])
    problem = PdeProblem(float(p["T"]), f, poly if poly is not None else Polynomial(), **kwargs)
    g = cfg["grid"]
    grid = grid or SpaceTimeGrid(problem.T, int(g["Nt"]), int(g["Nx"]))
    return Setup(problem, grid, g["scheme"], fn, poly is None)


def run_solve(setup: Setup):
    return solve(setup.problem, setup.grid, scheme=setup.scheme, y0_values=setup.y0_values())


def solve_with_boxes(setup: Setup, auto: bool):
    """Solve; with ``auto`` re-derive the boxes from the observed ranges."""
    sol = run_solve(setup)
    if not auto:
        return setup.problem, sol
    adjusted = with_observed_boxes(setup.problem, sol)
    return adjusted, sol


# ---------------------------------------------------------------------------
# commands


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    setup = build(cfg)
    problem, sol = solve_with_boxes(setup, cfg["problem"]["auto_boxes"])
    extra = {"config_hash": cfg.digest(), "problem": problem.to_dict(),
             "initial": "tabulated" if setup.tabulated else "polynomial"}
    sol.write(out / "solution.csv", extra=extra)
    print(f"solve: {setup.grid.Nt}x{setup.grid.Nx} {setup.scheme} range_escape={sol.range_escape}")
    return 0


def verification_reports(cfg: RunConfig, setup: Setup, names=None) -> tuple[dict, object]:
    """All requested residual families for the configured field on ``setup.grid``."""
    problem, sol = solve_with_boxes(setup, cfg["problem"]["auto_boxes"])
    grid = setup.grid
    fcfg = cfg["field"]
    if fcfg["kind"] == "counterexample":
        field = counterexample_field(grid, BumpSpec(float(fcfg["bump_A"]), problem.T))
    else:
        field = lift_dirac(sol)
    s = cfg["suite"]
    tb = time_basis(problem.T, int(s["time_basis"]))
    sb = space_basis(int(s["space_basis"]))
    y0v = setup.y0_values()
    reports: dict = {}
    for name in names or s["names"]:
        if name == "mv":
            reports |= mv_residual_suite(field, problem, tb, sb, y0_values=y0v)
        elif name == "emv":
            reports |= emv_residual_suite(field, problem, tb, sb, y0_values=y0v)
        elif name == "ibp":
            reports |= ibp_residual_suite(field, tb, sb, state_basis(int(s["state_degree"])))
        elif name == "occupation":
            lift = lift_occupation(field, sol)
            deg = int(s["occupation_degree"])
            reports |= occupation_suite(lift, problem, degree=deg)
            reports |= marginal_residuals(lift, problem, degree=deg, y0_values=y0v)
    apply_tolerances(reports, grid)
    return reports, sol


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    setup = build(cfg)
    reports, _ = verification_reports(cfg, setup)
    rdir = out / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name in sorted(reports):
        rep = reports[name]
        payload = rep.to_dict() | {"config_hash": cfg.digest()}
        _write_json(rdir / f"{name}.json", payload)
        summary[name] = {"max": rep.max, "tolerance": rep.tolerance, "passed": rep.passed}
        print(f"{name:16s} {'PASS' if rep.passed else 'FAIL'}  max={rep.max:.3e}  tol={rep.tolerance:.3e}")
    _write_json(out / "verify_summary.json", {"config_hash": cfg.digest(), "families": summary})
    return 0


def cmd_relax(cfg: RunConfig, out: Path) -> int:
    from .moment_relax import bounds_report, default_options, write_bounds_csv

    r = cfg["relax"]
    setup = build(cfg)
    ref_grid = SpaceTimeGrid(setup.problem.T, int(r["reference_grid"]), int(r["reference_grid"]))
    ref_setup = Setup(setup.problem, ref_grid, setup.scheme, setup.y0_fn, setup.tabulated)
    problem, ref = solve_with_boxes(ref_setup, cfg["problem"]["auto_boxes"])
    objectives = {k: _parse_poly(v, "objective") for k, v in sorted(r["objectives"].items())}
    rows = []
    for d in r["degrees"]:
        overrides = {"tol": float(cfg["tolerances"]["solver_tol"])}
        if r["max_iters"]:
            overrides["max_iters"] = int(r["max_iters"])
        rows += bounds_report(
            problem, objectives, [int(d)], reference=ref, opts=default_options(int(d), **overrides),
            y0=None if not setup.tabulated else setup.y0_fn, reduce=bool(r["reduce"]), rescale=bool(r["rescale"]),
        )
    write_bounds_csv(rows, out / "bounds.csv")
    _write_json(out / "bounds.json", {
        "config_hash": cfg.digest(),
        "problem": problem.to_dict(),
        "rows": [
            {"objective_id": b.objective_id, "d": b.d, "sense": b.sense, "certified_bound": b.value,
             "primal_objective": b.objective, "gap": b.gap, "reference": b.reference, "status": b.status}
            for b in rows
        ],
    })
    for b in rows:
        print(f"{b.objective_id} d={b.d} {b.sense}: {b.value:.8g} (gap {b.gap:.3g}, reference {b.reference:.8g})")
    return 0


def _nested_grids(cfg: RunConfig, T: float) -> list[SpaceTimeGrid]:
    g = cfg["grid"]
    nt, nx = int(g["Nt"]), int(g["Nx"])
    return [SpaceTimeGrid(T, nt * 2**k, (nx + 1) * 2**k - 1) for k in range(int(cfg["convergence"]["levels"]))]


ROUNDOFF_FLOOR = 1e-13


def fit_order(h: np.ndarray, err: np.ndarray) -> float | None:
    """Least-squares slope of log(err) against log(h); None when every error is
    at roundoff level (below :data:`ROUNDOFF_FLOOR`)."""
    err = np.asarray(err, dtype=float)
    if np.all(np.abs(err) <= ROUNDOFF_FLOOR):
        return None
    if np.any(err <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def convergence_table(cfg: RunConfig) -> list[dict]:
    base = build(cfg)
    grids = _nested_grids(cfg, base.problem.T)
    h = np.array([g.dx for g in grids])
    per_family: dict[str, list[float]] = {}
    sols = []
    for grid in grids:
        setup = Setup(base.problem, grid, base.scheme, base.y0_fn, base.tabulated)
        reports, sol = verification_reports(cfg, setup)
        sols.append(sol)
        for name, rep in reports.items():
            per_family.setdefault(name, []).append(rep.max)
    # self-convergence of y on the coarsest nodes
    diffs = []
    for k in range(len(grids) - 1):
        a, b = sols[k].y, sols[k + 1].y[::2, ::2]
        diffs.append(float(np.max(np.abs(a - b))))
    lo, hi = cfg["convergence"]["order_min"], cfg["convergence"]["order_max"]
    checked = set(cfg["convergence"]["families"])
    rows = []
    for name, errs in [("solution", diffs)] + sorted(per_family.items()):
        order = fit_order(h[: len(errs)], errs)
        status = "exact" if order is None else ("pass" if lo <= order <= hi else "fail")
        if name not in checked and status == "fail":
            status = "info"
        rows.append({"family": name, "errors": errs, "order": order, "status": status})
    return rows


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    rows = convergence_table(cfg)
    levels = int(cfg["convergence"]["levels"])
    with (out / "convergence.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family"] + [f"level{k}" for k in range(levels)] + ["order", "status"])
        for r in rows:
            errs = [f"{e:.12g}" for e in r["errors"]] + [""] * (levels - len(r["errors"]))
            order = "exact" if r["order"] is None else f"{r['order']:.6f}"
            w.writerow([r["family"], *errs, order, r["status"]])
    _write_json(out / "convergence.json", {"config_hash": cfg.digest(), "rows": rows})
    failed = [r["family"] for r in rows if r["status"] == "fail"]
    for r in rows:
        order = "exact" if r["order"] is None else f"{r['order']:.3f}"
        print(f"{r['family']:16s} order={order} {r['status']}")
    return 1 if failed else 0


HANDLERS = {"solve": cmd_solve, "verify": cmd_verify, "relax": cmd_relax, "convergence": cmd_convergence}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvrelax", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    parser.add_argument("--suite", choices=SUITES, help="run a single verification suite")
    parser.add_argument("--degree", type=int, help="single relaxation degree")
    parser.add_argument("--grid", help="grid as NtxNx, e.g. 64x63")
    parser.add_argument("--scheme", choices=("crank-nicolson", "implicit-euler"))
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    out: dict = {}
    if args.out is not None:
        out["output"] = {"dir": str(args.out)}
    if args.suite:
        out["suite"] = {"names": [args.suite]}
    if args.degree is not None:
        out["relax"] = {"degrees": [args.degree]}
    grid = {}
    if args.grid:
        grid |= parse_grid(args.grid)
    if args.scheme:
        grid["scheme"] = args.scheme
    if grid:
        out["grid"] = grid
    return out


def _fail(code: str, message: str, out: Path | None, status: int) -> int:
    payload = {"error": code, "message": message, "exit_code": status}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "error.json", payload)
        except OSError:
            pass
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    out = args.out
    try:
        cfg = load_config(args.config, _overrides(args))
        out = Path(cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out)
    except ConfigError as err:
        return _fail(err.code, str(err), out, 2)
    except MvRelaxError as err:
        return _fail(err.code, str(err), out, 1)
    except (FloatingPointError, np.linalg.LinAlgError) as err:
        return _fail("numerical-failure", str(err), out, 1)


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mvrelax import FieldSolution, PdeProblem, Polynomial, SpaceTimeGrid, solve  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture(scope="session")
def heat_problem() -> PdeProblem:
    return PdeProblem(0.5, Polynomial(), Polynomial.parse("x*(1 - x)"), ybox=(-0.5, 0.5), zbox=(2.0, 2.0))


@pytest.fixture(scope="session")
def allen_cahn_problem() -> PdeProblem:
    return PdeProblem(0.5, Polynomial.parse("y - y**3"), Polynomial.parse("x*(1 - x)"),
                      ybox=(-0.5, 0.5), zbox=(2.0, 2.0), L_Y=1.0)


@pytest.fixture(scope="session")
def heat_sine_problem() -> PdeProblem:
    # y0 is supplied as tabulated values; the polynomial slot stays zero
    return PdeProblem(0.5, Polynomial(), Polynomial(), ybox=(-1.5, 1.5), zbox=(10.0, 10.0))


def solve_sine(problem: PdeProblem, grid: SpaceTimeGrid, scheme: str = "crank-nicolson") -> FieldSolution:
    return solve(problem, grid, scheme=scheme, y0_values=np.sin(np.pi * grid.x))


@pytest.fixture(scope="session")
def grid64() -> SpaceTimeGrid:
    return SpaceTimeGrid(0.5, 64, 63)


@pytest.fixture(scope="session")
def heat_sol(heat_problem, grid64) -> FieldSolution:
    return solve(heat_problem, grid64)


@pytest.fixture(scope="session")
def sine_sol(heat_sine_problem, grid64) -> FieldSolution:
    return solve_sine(heat_sine_problem, grid64)


@pytest.fixture(scope="session")
def ac_sol(allen_cahn_problem, grid64) -> FieldSolution:
    return solve(allen_cahn_problem, grid64)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")

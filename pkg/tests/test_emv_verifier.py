import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bump_weighted_square, heat_exact, m2_weak_bump
from mvrelax import FieldSolution, PdeProblem, Polynomial, SpaceTimeGrid
from mvrelax.emv_verifier import (
    ResidualReport,
    apply_tolerances,
    dual_heat_certificate,
    emv_residual_suite,
    ibp_residual_space,
    ibp_residual_suite,
    ibp_residual_time,
    mv_residual_suite,
    tol_residual,
)
from mvrelax.pde_core import energy_residual_dissipation, energy_residual_m2, weak_residual
from mvrelax.testfns import SpaceTestFn, StateTestFn, TimeTestFn, space_basis, state_basis, time_basis
from mvrelax.young_measure import BumpSpec, counterexample_field, lift_dirac

TB, SB = time_basis(0.5, 6), space_basis(6)
BUMP = BumpSpec(4096.0, 0.5)


@pytest.fixture(scope="module")
def cubic_problem():
    return PdeProblem(0.5, Polynomial.parse("y**3"), Polynomial(), ybox=(-1.5, 1.5), zbox=(30.0, 30.0))


@pytest.fixture(scope="module")
def bump_field(grid64):
    return counterexample_field(grid64, BUMP)


def zero_solution(grid):
    return FieldSolution.from_values(np.zeros(grid.shape), grid)


def test_tolerance_scaling(grid64):
    h2 = grid64.dx**2 + grid64.dt**2
    assert tol_residual(grid64) == pytest.approx(0.1 * h2)
    assert tol_residual(grid64, "occ-weak") == pytest.approx(4.0 * h2)


def test_dirac_lift_matches_pde_core_exactly(ac_sol, allen_cahn_problem):
    field = lift_dirac(ac_sol)
    mv = mv_residual_suite(field, allen_cahn_problem, TB, SB)
    emv = emv_residual_suite(field, allen_cahn_problem, TB, SB)
    for (a, b), val in mv["m1-weak"].entries:
        assert val == weak_residual(ac_sol, allen_cahn_problem, SB[b], TB[a])
    for (a, b), val in emv["m2-weak"].entries:
        assert val == pytest.approx(energy_residual_m2(ac_sol, allen_cahn_problem, SB[b], TB[a]), rel=1e-12, abs=1e-18)
    for (a,), val in emv["dissipation"].entries:
        assert val == pytest.approx(energy_residual_dissipation(ac_sol, allen_cahn_problem, TB[a]), rel=1e-12, abs=1e-18)


def test_dirac_lift_within_tolerance(ac_sol, allen_cahn_problem):
    field = lift_dirac(ac_sol)
    reports = mv_residual_suite(field, allen_cahn_problem, TB, SB)
    reports |= emv_residual_suite(field, allen_cahn_problem, TB, SB)
    reports |= ibp_residual_suite(field, TB, SB, state_basis(3))
    apply_tolerances(reports, ac_sol.grid)
    failed = {k: r.max for k, r in reports.items() if not r.passed}
    assert not failed


def test_counterexample_first_moments(bump_field, cubic_problem):
    mv = mv_residual_suite(bump_field, cubic_problem, TB, SB)
    assert mv["m1-weak"].max <= 1e-10
    assert mv["m1-ic"].max == 0.0 and mv["m1-bc"].max == 0.0


def test_counterexample_second_moments(bump_field, cubic_problem, grid64):
    emv = emv_residual_suite(bump_field, cubic_problem, TB, SB)
    entry = dict(emv["m2-weak"].entries)[(0, 0)]
    oracle = m2_weak_bump(BUMP.A, BUMP.T)
    # trapezoid error is O(h^4) here: 1.04e-6 relative at 64 x 63
    assert entry == pytest.approx(oracle, rel=2e-6)
    assert abs(entry) > 10 * tol_residual(grid64, "m2-weak")
    assert emv["m2-ic"].max == 0.0 and emv["m2-bc"].max == 0.0
    fine = SpaceTimeGrid(0.5, 128, 127)
    fine_entry = emv_residual_suite(counterexample_field(fine, BUMP), cubic_problem, TB[:1], SB[:1])["m2-weak"]
    assert fine_entry.entries[0][1] == pytest.approx(oracle, rel=1e-7)


def test_zero_field_all_zero():
    g = SpaceTimeGrid(0.5, 16, 15)
    p = PdeProblem(0.5, Polynomial.parse("y - y**3"), Polynomial())
    field = lift_dirac(zero_solution(g))
    reports = mv_residual_suite(field, p, TB, SB) | emv_residual_suite(field, p, TB, SB)
    reports |= ibp_residual_suite(field, TB, SB, [StateTestFn(Polynomial.parse("y + y**2"))])
    assert all(r.max == 0.0 for r in reports.values())


def test_shifted_atom_is_detected():
    g = SpaceTimeGrid(0.5, 16, 15)
    p = PdeProblem(0.5, Polynomial.parse("y - y**3"), Polynomial())
    y = np.zeros(g.shape)
    n, j = 8, 7
    y[n, j] = 0.1
    field = lift_dirac(zero_solution(g)).replace_atoms(y=y[None])
    rep = mv_residual_suite(field, p, TB[:1], SB[:1])["m1-weak"]
    # only the reaction term sees the shift: -w_n w_j phi v (f(0.1) - f(0))
    expected = -g.wt[n] * g.wx[j] * TB[0](g.t[n]) * SB[0](g.x[j]) * (0.1 - 0.1**3)
    assert rep.entries[0][1] == pytest.approx(expected, rel=1e-12)
    assert rep.max > 0.5 * abs(expected)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_entries_linear_in_test_function(alpha):
    g = SpaceTimeGrid(0.5, 16, 15)
    p = PdeProblem(0.5, Polynomial.parse("y**3"), Polynomial(), ybox=(-1.5, 1.5), zbox=(30, 30))
    field = counterexample_field(g, BUMP)
    phi = TB[1]
    scaled = TimeTestFn.poly_bump(0.5, alpha * phi.q)
    a = emv_residual_suite(field, p, [phi], SB[:2])["m2-weak"].values
    b = emv_residual_suite(field, p, [scaled], SB[:2])["m2-weak"].values
    np.testing.assert_allclose(b, alpha * a, rtol=1e-12, atol=1e-15 * np.max(np.abs(a)))


def test_ibp_exact_heat_second_order():
    beta = StateTestFn(Polynomial.parse("y"))
    for n in (32, 64):
        g = SpaceTimeGrid(0.5, n, n - 1)
        field = lift_dirac(FieldSolution.from_values(heat_exact(g.tt, g.xx), g))
        reps = ibp_residual_suite(field, TB, SB, [beta])
        assert max(r.max for r in reps.values()) <= 0.01 * (g.dx**2 + g.dt**2)


def test_ibp_on_counterexample(bump_field, grid64):
    beta = StateTestFn(Polynomial.parse("y"))
    h2 = grid64.dx**2 + grid64.dt**2
    for phi in TB:
        for v in SB:
            assert abs(ibp_residual_time(bump_field, beta, phi, v)) <= 1e-3 * h2
            assert abs(ibp_residual_space(bump_field, beta, phi, v)) <= 1e-3 * h2


def test_certificate_dirac_and_zero_source(ac_sol, allen_cahn_problem):
    field = lift_dirac(ac_sol)
    cert = dual_heat_certificate(field, ac_sol, allen_cahn_problem, Polynomial.constant(1.0))
    assert cert.integral_value == 0.0 and cert.concentrated
    bump = counterexample_field(ac_sol.grid, BumpSpec(1.0, 0.5))
    assert dual_heat_certificate(bump, ac_sol, allen_cahn_problem, Polynomial()).integral_value == 0.0


@pytest.mark.parametrize("source", ["1", "t*(0.5 - t)*x*(1 - x)"])
def test_certificate_counterexample(bump_field, cubic_problem, grid64, source):
    g_src = Polynomial.parse(source)
    cert = dual_heat_certificate(bump_field, zero_solution(grid64), cubic_problem, g_src)
    oracle = bump_weighted_square(BUMP.A, BUMP.T, cubic_problem.L_Y, lambda t, x: g_src(t=t, x=x) + 0 * t)
    assert cert.integral_value == pytest.approx(oracle, rel=1e-8)
    assert not cert.concentrated
    assert cert.maximum_principle_ok and cert.min_phi_g >= -1e-10
    # the two sides of the duality identity agree to discretization accuracy
    assert cert.dual_value == pytest.approx(cert.integral_value, rel=2e-3)


def test_certificate_monotone_in_density(cubic_problem, grid64):
    vals = []
    for A in (1000.0, 2000.0, 4096.0):
        field = counterexample_field(grid64, BumpSpec(A, 0.5))
        vals.append(dual_heat_certificate(field, zero_solution(grid64), cubic_problem, Polynomial.constant(1.0)).integral_value)
    assert vals == sorted(vals)


def test_certificate_rejects_negative_source(bump_field, cubic_problem, grid64):
    with pytest.raises(ValueError):
        dual_heat_certificate(bump_field, zero_solution(grid64), cubic_problem, Polynomial.parse("t - 1"))


def test_report_serialization(tmp_path, bump_field, cubic_problem):
    rep = emv_residual_suite(bump_field, cubic_problem, TB[:2], SB[:3], tolerance=1e-3)["m2-weak"]
    data = json.loads(rep.write(tmp_path / "r.json").read_text())
    assert data["family"] == "m2-weak" and data["basis_dims"] == [2, 3]
    assert len(data["entries"]) == 6
    assert data["max"] == pytest.approx(max(abs(e["value"]) for e in data["entries"]))
    assert data["l2"] == pytest.approx(np.linalg.norm([e["value"] for e in data["entries"]]))
    assert data["passed"] is False
    with pytest.raises(ValueError):
        ResidualReport("bogus")
    with pytest.raises(ValueError):
        mv_residual_suite(bump_field, cubic_problem, [], SB)

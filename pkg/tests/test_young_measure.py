import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mvrelax import PdeProblem, Polynomial, SpaceTimeGrid, solve
from mvrelax.errors import GridMismatch
from mvrelax.young_measure import (
    BumpSpec,
    CellMeasure,
    Atom,
    YoungField,
    counterexample_field,
    lift_dirac,
    marginal_concentration_report,
    moments,
    pair,
    squared_error_density,
    weighted_error_density,
)
from mvrelax.pde_core import FieldSolution

SMALL = SpaceTimeGrid(0.5, 4, 3)
BUMP = BumpSpec(4096.0, 0.5)


def random_field(seed: int, K: int = 3) -> YoungField:
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, (K,) + SMALL.shape)
    w /= w.sum(axis=0)
    return YoungField(SMALL, w, *(rng.normal(size=(K,) + SMALL.shape) for _ in range(3)))


coef_polys = st.dictionaries(st.tuples(*[st.integers(0, 2)] * 5), st.floats(-2, 2), max_size=4).map(Polynomial)


@settings(max_examples=40)
@given(st.integers(0, 10_000), coef_polys, coef_polys, st.floats(-3, 3), st.floats(-3, 3))
def test_pair_is_linear(seed, g, h, a, b):
    field = random_field(seed)
    lhs = pair(field, a * g + b * h)
    rhs = a * pair(field, g) + b * pair(field, h)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@settings(max_examples=40)
@given(st.integers(0, 10_000), coef_polys)
def test_jensen(seed, g):
    field = random_field(seed)
    assert np.all(pair(field, g * g) >= pair(field, g) ** 2 - 1e-9 * (1 + pair(field, g) ** 2))


@settings(max_examples=40)
@given(st.integers(0, 10_000), arrays(float, SMALL.shape, elements=st.floats(-2, 2)))
def test_error_density_two_ways(seed, yref):
    field = random_field(seed)
    ref = FieldSolution.from_values(yref, SMALL)
    atoms = squared_error_density(field, ref, "atoms")
    via_moments = squared_error_density(field, ref, "moments")
    assert np.max(np.abs(atoms - via_moments)) <= 1e-12 * max(1.0, np.max(atoms))
    assert np.all(atoms >= 0)


def test_pair_normalization_and_cell_agreement():
    field = random_field(3)
    np.testing.assert_allclose(pair(field, Polynomial.constant(1.0)), 1.0, atol=1e-14)
    g = Polynomial.parse("t*y + z0**2 - x*z1")
    vals = pair(field, g)
    cell = field.cell(2, 1)
    assert cell.pair(g, SMALL.t[2], SMALL.x[1]) == pytest.approx(vals[2, 1], rel=1e-12)


def test_dirac_lift(ac_sol, allen_cahn_problem):
    field = lift_dirac(ac_sol)
    assert field.n_atoms == 1
    np.testing.assert_array_equal(field.y[0], ac_sol.y)
    m = moments(field, allen_cahn_problem)
    np.testing.assert_array_equal(m.m1, ac_sol.y)
    np.testing.assert_allclose(m.m2, ac_sol.y**2, rtol=0, atol=1e-15)
    assert not np.any(squared_error_density(field, ac_sol))
    assert marginal_concentration_report(field, ac_sol) == (0.0, 0.0, 0.0)


def test_dirac_lift_of_zero():
    g = SpaceTimeGrid(0.5, 8, 7)
    field = lift_dirac(FieldSolution.from_values(np.zeros(g.shape), g))
    m = moments(field, PdeProblem(0.5, Polynomial.parse("y - y**3"), Polynomial()))
    for name in ("m1", "m2", "mf", "mfhat", "mz0", "mz0sq", "mzbarsq"):
        assert not np.any(getattr(m, name))


def test_counterexample_field(grid64):
    field = counterexample_field(grid64, BUMP)
    g = BUMP.poly(t=grid64.tt, x=grid64.xx)
    problem = PdeProblem(0.5, Polynomial.parse("y**3 - 2*y"), Polynomial(), ybox=(-2, 2))
    m = moments(field, problem)
    assert not np.any(m.m1)
    assert not np.any(m.mf)  # odd f
    np.testing.assert_allclose(pair(field, Polynomial.parse("y**2")), g**2, rtol=1e-14)
    zero = FieldSolution.from_values(np.zeros(grid64.shape), grid64)
    np.testing.assert_allclose(squared_error_density(field, zero), g**2, rtol=1e-14)
    assert BUMP.peak == pytest.approx(1.0)
    sup_w, sup_zbar, sup_z0 = marginal_concentration_report(field, zero)
    assert sup_w == pytest.approx(BUMP.peak**2, abs=1e-10)
    gx = BUMP.poly.diff("x")(t=grid64.tt, x=grid64.xx)
    gt = BUMP.poly.diff("t")(t=grid64.tt, x=grid64.xx)
    assert sup_zbar == pytest.approx(np.max(gx**2), rel=1e-14)
    assert sup_z0 == pytest.approx(np.max(gt**2), rel=1e-14)


def test_weighted_density():
    g = SpaceTimeGrid(0.5, 4, 3)
    w = np.ones(g.shape)
    np.testing.assert_array_equal(weighted_error_density(w, g, 0.0), w)
    assert weighted_error_density(w, g, 1.0)[-1, 0] == pytest.approx(np.exp(-1.0))
    assert np.all(weighted_error_density(w, g, 2.0) <= w)


def test_coarse_lift_against_fine_solution(allen_cahn_problem):
    coarse = solve(allen_cahn_problem, SpaceTimeGrid(0.5, 32, 31))
    fine = solve(allen_cahn_problem, SpaceTimeGrid(0.5, 64, 63))
    sub = FieldSolution.from_values(fine.y[::2, ::2], coarse.grid)
    err = np.max(np.abs(coarse.y - sub.y))
    sup_w, _, _ = marginal_concentration_report(lift_dirac(coarse), sub)
    assert sup_w <= err**2 * (1 + 1e-12)


def test_validation():
    g = SpaceTimeGrid(0.5, 4, 3)
    ones, zeros = np.ones(g.shape), np.zeros(g.shape)
    with pytest.raises(ValueError):
        YoungField(g, 0.5 * ones, zeros, zeros, zeros)
    with pytest.raises(GridMismatch):
        YoungField(g, np.ones((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        CellMeasure((Atom(0, 0, 0, 0.3),))
    field = random_field(0)
    other = FieldSolution.from_values(np.zeros((9, 9)), SpaceTimeGrid(0.5, 8, 7))
    with pytest.raises(GridMismatch):
        squared_error_density(field, other)


def test_csv_round_trip(tmp_path):
    field = random_field(7)
    field.write(tmp_path / "f.csv", extra={"config_hash": "x"})
    back = YoungField.read(tmp_path / "f.csv")
    for name in ("weights", "y", "z0", "z1"):
        np.testing.assert_array_equal(getattr(back, name), getattr(field, name))


def test_box_violations():
    field = counterexample_field(SMALL, BUMP)
    assert field.box_violations((-2, 2), (1e3, 1e3)) == 0
    assert field.box_violations((-0.1, 0.1), (1e3, 1e3)) > 0

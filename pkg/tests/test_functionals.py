import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import cosine_problem, random_measure
from congestflow.exceptions import (
    AssumptionViolated,
    BadParameter,
    GridMismatch,
    InitialConditionViolated,
)
from congestflow.functionals import (
    AssumptionClass,
    GPlusW,
    Potential,
    check_weak_exponent,
    congestion_from_name,
    discrete_action,
    geodesic_kinetic_energy,
    internal_energy,
    kinetic_terms,
    log_internal_energy,
    potential_from_name,
)
from congestflow.grid import DiscreteCurve, Grid, GridMeasure, uniform
from congestflow.transport import w2_squared

def _constant(mu, T, N):
    return DiscreteCurve.from_array(mu.grid, T, np.tile(mu.rho, (N + 1, 1)))


NAMES = ["um:1", "um:1.5", "um:2", "um:3", "sqrt1p2", "sqrt1p4", "hinge2"]


@pytest.mark.parametrize("name", NAMES)
def test_library_self_check_and_derivatives(name):
    f = congestion_from_name(name)
    assert f.self_check()
    t = np.array([0.3, 0.7, 1.5, 2.0, 3.0])
    h = 1e-6
    np.testing.assert_allclose(f.fp(t), (f.f(t + h) - f.f(t - h)) / (2 * h), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(f.fpp(t), (f.fp(t + h) - f.fp(t - h)) / (2 * h), rtol=1e-5, atol=1e-6)


def test_library_metadata():
    assert congestion_from_name("sqrt1p2").assumption_class is AssumptionClass.WEAK
    assert congestion_from_name("sqrt1p2").fp_inf == 1.0
    assert congestion_from_name("um:3").alpha == 1.0
    assert congestion_from_name("hinge2").t0 == 1.0
    assert not congestion_from_name("sqrt1p2").is_superlinear()
    with pytest.raises(BadParameter):
        congestion_from_name("um:0.5")
    with pytest.raises(BadParameter):
        congestion_from_name("cubic")
    with pytest.raises(BadParameter):
        potential_from_name("bumpy", Grid(4))


@pytest.mark.parametrize("m", [1.0, 1.5, 2.0, 4.0, 7.0])
def test_uniform_internal_energy(m):
    expected = 1.0 if m == 1 else 1.0 / (m * (m - 1.0))
    assert internal_energy(uniform(Grid(10)), m) == pytest.approx(expected, rel=1e-14)


@given(st.integers(0, 2**31 - 1), st.floats(1.1, 30.0))
def test_log_energy_matches_direct_sum(seed, m):
    mu = random_measure(np.random.default_rng(seed), Grid(12))
    assert log_internal_energy(mu.rho, m, mu.grid.dx) == pytest.approx(math.log(internal_energy(mu, m)), abs=1e-12)


def test_log_energy_no_overflow():
    g = Grid(4)
    mu = GridMeasure(g, [4.0, 0.0, 0.0, 0.0])
    m = 600.0
    expected = m * math.log(4.0) + math.log(0.25) - math.log(m * (m - 1))
    assert log_internal_energy(mu.rho, m, g.dx) == pytest.approx(expected, rel=1e-14)


def test_entropy_of_point_mass_cell():
    g = Grid(2)
    assert internal_energy(GridMeasure(g, [2.0, 0.0]), 1) == pytest.approx(math.log(2.0) + 1.0)


def test_potential_metadata():
    g = Grid(5)
    V = potential_from_name("quadratic_well", g, 2.0)
    assert V.boundary_flag
    assert V.lap_sup == pytest.approx(4.0)
    # values 0.32, 0.08, 0, 0.08, 0.32 on cells of width 0.2
    assert V.grad_sup == pytest.approx(0.24 / 0.2)
    with pytest.raises(BadParameter):
        Potential(g, np.zeros(4))


def test_gpluw_validation():
    g = Grid(5)
    with pytest.raises(AssumptionViolated):
        GPlusW(congestion_from_name("sqrt1p2"), potential_from_name("zero", g))
    with pytest.raises(AssumptionViolated):
        GPlusW(congestion_from_name("um:2"), Potential(g, -((g.centers - 0.5) ** 2)))


def test_action_of_constant_uniform_curve():
    spec = cosine_problem(8, amplitude=0.0, N=4, lam=0.1, potential="quadratic_well")
    curve = _constant(spec.rho0, spec.T, spec.N)
    running = 0.5 + 0.1 * 1.0 + float(np.mean(spec.V.values))
    assert discrete_action(curve, spec) == pytest.approx(spec.tau * 3 * running, rel=1e-12)


def test_action_penalizations_and_guards():
    spec = cosine_problem(8, N=2)
    curve = _constant(spec.rho0, spec.T, spec.N)
    assert discrete_action(curve, spec) == math.inf
    wrong = _constant(uniform(spec.grid), spec.T, spec.N)
    with pytest.raises(InitialConditionViolated):
        discrete_action(wrong, spec)
    with pytest.raises(GridMismatch):
        discrete_action(_constant(uniform(Grid(4)), spec.T, spec.N), spec)
    with pytest.raises(BadParameter):
        kinetic_terms(curve, "lagrangian")


def test_kinetic_views_and_geodesic_energy():
    spec = cosine_problem(16, N=2)
    mid = uniform(spec.grid)
    curve = DiscreteCurve(spec.grid, spec.T, spec.N, [spec.rho0, mid, spec.psi.target])
    atoms = kinetic_terms(curve, "atoms")
    assert atoms[0] == pytest.approx(w2_squared(spec.rho0, mid), abs=1e-15)
    # geodesic pieces have constant speed, so refining them does not change the action
    assert geodesic_kinetic_energy(curve, 8) == pytest.approx(atoms.sum() / (2 * curve.tau), rel=1e-10)
    assert np.all(kinetic_terms(curve, "density") > 0)


def test_weak_exponent_rule():
    check_weak_exponent(-3.0, 2.0, 2.0)
    with pytest.raises(AssumptionViolated):
        check_weak_exponent(-3.0, 1.0, 2.0)
    with pytest.raises(BadParameter):
        check_weak_exponent(-3.0, 2.0, 1.0)

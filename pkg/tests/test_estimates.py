import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import cosine_problem
from congestflow.estimates import (
    Schedule,
    boundary_flow_check,
    extrapolated_floor,
    fit_power_law,
    flow_interchange_report,
    lm_stat,
    moser_trace,
    omega_estimate,
    sup_density,
    violation,
)
from congestflow.exceptions import AssumptionViolated, BadParameter, NotConverged, WrongPenalization
from congestflow.grid import DiscreteCurve, Grid, uniform
from congestflow.solver import SolverParams, solve


def _uniform_curve(n=8, T=1.0, N=10):
    return DiscreteCurve.from_array(Grid(n), T, np.ones((N + 1, n)))


@given(st.floats(1.05, 40.0), st.integers(0, 4), st.integers(5, 10))
def test_lm_stat_uniform_closed_form(m, lo, hi):
    curve = _uniform_curve()
    count = hi - lo + 1
    expected = (count * curve.tau / (m * (m - 1))) ** (1 / m)
    assert lm_stat(curve, m, lo * curve.tau, hi * curve.tau) == pytest.approx(expected, rel=1e-12)


def test_lm_stat_guards():
    curve = _uniform_curve()
    assert lm_stat(curve, 2.0, 0.51, 0.59) == 0.0
    with pytest.raises(BadParameter):
        lm_stat(curve, 1.0, 0, 1)
    with pytest.raises(BadParameter):
        lm_stat(curve, 2.0, 0.5, 1.5)
    assert sup_density(curve, 0.0, 1.0) == 1.0
    with pytest.raises(BadParameter):
        sup_density(curve, 0.51, 0.59)


def test_moser_exponents_and_windows():
    spec = cosine_problem(8, N=10)
    curve = _uniform_curve()
    strong = moser_trace(curve, spec, "Strong", 2.0, 0.1, 0.4, 0.6, n_max=3)
    np.testing.assert_allclose(strong.m_values, [2, 4, 8, 16])
    np.testing.assert_allclose(strong.window_starts, 0.4 - 0.1 * 2.0 ** (1 - np.arange(4)))
    np.testing.assert_allclose(strong.window_ends, 0.6 + 0.1 * 2.0 ** (1 - np.arange(4)))
    weak_spec = cosine_problem(8, N=10, congestion="sqrt1p2")
    weak = moser_trace(curve, weak_spec, Schedule.WEAK, 4.0, 0.1, 0.4, n_max=2, m_start=3.0)
    np.testing.assert_allclose(weak.m_values, [3, 4, 8])
    np.testing.assert_allclose(weak.window_ends, 1.0)
    with pytest.raises(BadParameter):
        moser_trace(curve, weak_spec, Schedule.WEAK, 2.0, 0.1, 0.4, n_max=2, m_start=2.0)


def test_moser_guards():
    curve = _uniform_curve()
    with pytest.raises(BadParameter):
        moser_trace(curve, cosine_problem(8, N=10, congestion="sqrt1p2"), "Strong", 2.0, 0.1, 0.4)
    with pytest.raises(AssumptionViolated):
        moser_trace(curve, cosine_problem(8, N=10, congestion="sqrt1p2"), "Weak", 2.0, 0.1, 0.4, m_start=1.0)
    with pytest.raises(BadParameter):
        moser_trace(curve, cosine_problem(8, N=10), "Strong", 2.0, 0.3, 0.4, 0.6)


def test_beta_two_prefactor_on_uniform_curve():
    # for a constant density the statistic is (len / (m (m - 1)))^(1/m), so even a
    # flat curve grows by more than 10% per step from n = 3 on when beta = 2
    spec = cosine_problem(8, N=64)
    curve = _uniform_curve(N=64)
    trace = moser_trace(curve, spec, "Strong", 2.0, 0.15, 0.4, 0.6, n_max=4)
    lengths = [curve.tau * np.count_nonzero((curve.times >= a - 1e-12) & (curve.times <= b + 1e-12))
               for a, b in zip(trace.window_starts, trace.window_ends)]
    closed = [(ell / (m * (m - 1))) ** (1 / m) for ell, m in zip(lengths, trace.m_values)]
    np.testing.assert_allclose(trace.L_values, closed, rtol=1e-12)
    assert np.all(trace.ratios()[2:] > 1.1)


def test_omega_estimate():
    assert omega_estimate(_uniform_curve(), 2.0) == 0.0
    grid = Grid(4)
    bumps = np.ones((3, 4))
    bumps[1] = [1.5, 0.5, 1.5, 0.5]
    curve = DiscreteCurve.from_array(grid, 2.0, bumps)
    u = [1 / 2, (1.5**2 + 0.5**2) / 4, 1 / 2]
    assert omega_estimate(curve, 2.0) == pytest.approx(-(u[0] + u[2] - 2 * u[1]) / u[1])


def test_flow_interchange_rows_and_convergence_guard():
    spec = cosine_problem(16, N=4, lam=0.05)
    curve, _ = solve(spec, SolverParams(slice_tol=1e-10))
    rows = flow_interchange_report(curve, spec, [1.0, 2.0])
    assert [(r.k, r.m) for r in rows] == [(k, m) for k in (1, 2, 3) for m in (1.0, 2.0)]
    assert all(r.residual == pytest.approx(r.rhs - r.lhs) for r in rows)
    bad = curve.replace_slice(2, uniform(spec.grid))
    with pytest.raises(NotConverged):
        flow_interchange_report(bad, spec, [2.0])


def test_boundary_check_needs_terminal_cost():
    spec = cosine_problem(8, N=4)
    with pytest.raises(WrongPenalization):
        boundary_flow_check(_uniform_curve(N=4), spec, 2.0)
    g_spec = cosine_problem(8, N=4, final="quadratic_well")
    curve = DiscreteCurve.from_array(g_spec.grid, 1.0, np.tile(g_spec.rho0.rho, (5, 1)))
    U = 0.5 * np.sum(g_spec.rho0.rho ** 2) / 8
    assert boundary_flow_check(curve, g_spec, 2.0) == pytest.approx(g_spec.psi.W.lap_sup * U)


def test_floor_logic():
    assert violation([0.3, -0.2, 1.0]) == 0.2
    assert violation([]) == 0.0
    est = extrapolated_floor(64, 1e-3, 128, 2.5e-4)
    assert est.shrink == pytest.approx(4.0)
    assert est.order == pytest.approx(2.0)
    assert est.shrinks(2.0)
    assert est.predicted(256) == pytest.approx(6.25e-5)
    flat = extrapolated_floor(64, 1e-3, 128, 9e-4)
    assert not flat.shrinks(2.0)
    tiny = extrapolated_floor(64, 0.0, 128, 0.0)
    assert tiny.shrinks() and math.isinf(tiny.shrink)
    with pytest.raises(BadParameter):
        extrapolated_floor(128, 0.0, 64, 0.0)


def test_power_law_fit():
    xs = np.array([8, 16, 32, 64])
    p, c = fit_power_law(xs, 3.0 * xs**-1.5)
    assert p == pytest.approx(-1.5) and c == pytest.approx(3.0)

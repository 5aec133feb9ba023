import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import cosine_problem
from congestflow.exceptions import BadParameter, WrongPenalization
from congestflow.functionals import discrete_action
from congestflow.grid import DiscreteCurve, uniform
from congestflow.solver import (
    CongestedFlowSolver,
    SolverParams,
    initial_curve,
    lambda_ladder,
    optimality_residual,
    slice_residual_vector,
    solve,
    solve_slice,
)


@pytest.mark.parametrize("kwargs", [
    {"slice_tol": 0.0}, {"damping": 0.0}, {"damping": 1.5}, {"max_newton": 0},
    {"slice_method": "gradient"}, {"lambda_schedule": (1.0, 2.0, 3)}, {"lambda_schedule": (1.0, 0.5, 0)},
])
def test_params_validation(kwargs):
    with pytest.raises(BadParameter):
        SolverParams(**kwargs)


def test_lambda_ladder_ends_at_target():
    spec = cosine_problem(8, lam=1e-3)
    assert lambda_ladder(spec, (1.0, 0.1, 5)) == pytest.approx([1.0, 0.1, 1e-2, 1e-3])


def test_stationary_problem_stays_uniform():
    # with uniform endpoints and no potential the constant curve is optimal by Jensen
    spec = cosine_problem(16, amplitude=0.0, N=4, lam=0.05)
    curve, report = solve(spec)
    assert report.converged
    for s in curve.slices:
        np.testing.assert_allclose(s.rho, 1.0, atol=1e-10)


def test_solve_decreases_action_and_meets_tolerance():
    spec = cosine_problem(16, N=6, lam=0.05)
    start = initial_curve(spec)
    curve, report = solve(spec, SolverParams(slice_tol=1e-9))
    assert report.converged
    assert discrete_action(curve, spec) <= discrete_action(start, spec)
    assert np.all(np.diff(report.action_history) <= 1e-12)
    assert max(optimality_residual(curve, spec, k) for k in range(1, spec.N)) <= 1e-9


def test_initial_curve_matches_endpoints():
    spec = cosine_problem(8, N=4)
    c = initial_curve(spec)
    np.testing.assert_allclose(c.slices[0].rho, spec.rho0.rho)
    np.testing.assert_allclose(c.slices[-1].rho, spec.psi.target.rho)
    assert all(np.all(s.rho > 0) for s in c.slices)


def test_residual_vector_constant_at_optimum():
    spec = cosine_problem(16, N=4, lam=0.05)
    curve, _ = solve(spec, SolverParams(slice_tol=1e-10))
    r = slice_residual_vector(curve.slices[2], curve.slices[1], curve.slices[3], spec)
    assert np.ptp(r) <= 2e-10
    with pytest.raises(BadParameter):
        optimality_residual(curve, spec, spec.N)


def test_slice_methods_agree():
    spec = cosine_problem(16, N=2, lam=0.05)
    mu, nu = spec.rho0, spec.psi.target
    init = uniform(spec.grid)
    newton = solve_slice(mu, nu, spec, SolverParams(slice_tol=1e-11), init)
    picard = solve_slice(mu, nu, spec, SolverParams(slice_tol=1e-11, slice_method="fixed_point"), init)
    np.testing.assert_allclose(newton.rho, picard.rho, atol=1e-8)


def test_terminal_slice():
    spec = cosine_problem(16, N=2, lam=0.05, final="quadratic_well")
    init = uniform(spec.grid)
    last = solve_slice(init, None, spec, SolverParams(slice_tol=1e-11), init, terminal=True)
    curve = DiscreteCurve(spec.grid, spec.T, spec.N, [spec.rho0, init, last])
    r = slice_residual_vector(last, init, None, spec)
    assert np.ptp(r) <= 1e-10
    assert optimality_residual(curve, spec, spec.N) <= 1e-10
    target = cosine_problem(16, N=2)
    with pytest.raises(WrongPenalization):
        solve_slice(target.rho0, None, target, SolverParams(), init, terminal=True)


def test_zero_lambda_needs_schedule():
    with pytest.raises(BadParameter):
        solve(cosine_problem(8, N=3, lam=0.0))
    curve, report = solve(cosine_problem(8, N=3, lam=1e-3), SolverParams(lambda_schedule=(0.1, 0.1, 2)))
    assert report.lambdas == pytest.approx([0.1, 0.01, 1e-3])
    assert report.converged


def test_estimator_api():
    x = (np.arange(16) + 0.5) / 16
    X = 1 + 0.5 * np.cos(np.pi * x)
    est = CongestedFlowSolver(steps=4, lam=0.05, target=1 - 0.5 * np.cos(np.pi * x))
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit(X)
    out = est.predict([0.0, 0.25, 1.0])
    assert out.shape == (3, 16)
    np.testing.assert_allclose(out.mean(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(out[1], est.curve_.slices[1].rho, atol=0.05)
    assert est.score() == -est.action_
    assert clone(est).get_params()["steps"] == 4
    with pytest.raises(BadParameter):
        est.predict([2.0])

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_measure
from congestflow.exceptions import BadParameter, NonpositiveSource, OracleTooLarge
from congestflow.grid import Grid, GridMeasure, from_density, uniform
from congestflow.transport import (
    DensityCoupling,
    c_transform,
    cell_potential,
    displacement_interpolate,
    kantorovich_potential,
    lp_oracle_w2,
    monotone_plan,
    quantile_function,
    w2,
    w2_density,
    w2_squared,
)

seeds = st.integers(0, 2**31 - 1)


def _pair(seed, n, floor=0.0):
    rng = np.random.default_rng(seed)
    g = Grid(n)
    return random_measure(rng, g, floor), random_measure(rng, g, floor)


def test_translation_distance():
    # half the mass shifted by one cell costs dx^2 / 2
    g = Grid(4)
    mu = GridMeasure(g, [2.0, 2.0, 0.0, 0.0])
    nu = GridMeasure(g, [0.0, 2.0, 2.0, 0.0])
    assert w2_squared(mu, nu) == pytest.approx(g.dx**2, abs=1e-15)
    assert w2(mu, mu) == 0.0


@given(seeds, st.sampled_from([2, 3, 5, 8]))
def test_w2_matches_lp(seed, n):
    mu, nu = _pair(seed, n)
    assert abs(w2(mu, nu) - lp_oracle_w2(mu, nu)) <= 1e-10 * (1 + w2(mu, nu))


@given(seeds)
def test_w2_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    g = Grid(6)
    a, b, c = (random_measure(rng, g, 0.0) for _ in range(3))
    assert w2(a, b) == pytest.approx(w2(b, a), abs=1e-14)
    assert w2(a, c) <= w2(a, b) + w2(b, c) + 1e-12


def test_lp_oracle_size_cap():
    with pytest.raises(OracleTooLarge):
        lp_oracle_w2(uniform(Grid(65)), uniform(Grid(65)))


@given(seeds)
def test_monotone_plan_marginals(seed):
    mu, nu = _pair(seed, 7)
    P = monotone_plan(mu, nu).coupling
    np.testing.assert_allclose(P.sum(axis=1), mu.masses, atol=1e-14)
    np.testing.assert_allclose(P.sum(axis=0), nu.masses, atol=1e-14)
    x = mu.grid.centers
    assert np.sum(P * (x[:, None] - x[None, :]) ** 2) == pytest.approx(w2_squared(mu, nu), abs=1e-14)


@given(seeds)
def test_potential_is_dual_optimal(seed):
    # phi and its c-transform attain the primal value and are c-concave pairs
    mu, nu = _pair(seed, 9, floor=0.05)
    phi = kantorovich_potential(mu, nu).phi
    psi = c_transform(phi, mu.grid)
    dual = np.dot(phi, mu.masses) + np.dot(psi, nu.masses)
    assert dual == pytest.approx(w2_squared(mu, nu), abs=1e-12)


def test_potential_requires_positive_source():
    g = Grid(4)
    mu = GridMeasure(g, [2.0, 2.0, 0.0, 0.0])
    with pytest.raises(NonpositiveSource):
        kantorovich_potential(mu, uniform(g))
    phi = kantorovich_potential(mu, GridMeasure(g, [0.0, 2.0, 2.0, 0.0]), require_positive=False).phi
    # on the support the slope is 2 (x - T(x)) = -2 dx at the interface between cells 0 and 1
    assert phi[1] - phi[0] == pytest.approx(-2 * g.dx * g.dx)


@given(seeds, st.floats(0.0, 1.0))
def test_displacement_atoms(seed, t):
    mu, nu = _pair(seed, 6)
    pt = displacement_interpolate(mu, nu, t)
    x = mu.grid.centers
    mean = (1 - t) * np.dot(x, mu.masses) + t * np.dot(x, nu.masses)
    assert pt.mean() == pytest.approx(mean, abs=1e-12)


def test_displacement_endpoints_and_modes():
    mu, nu = _pair(3, 6, floor=0.1)
    dens = displacement_interpolate(mu, nu, 0.0, mode="density")
    # rebinning spreads each atom over two neighbouring cells, so the endpoint is
    # reproduced only up to a fraction of a cell in transport distance
    assert abs(dens.masses.sum() - 1) <= 1e-12
    assert w2(dens, mu) < mu.grid.dx
    with pytest.raises(NonpositiveSource):
        displacement_interpolate(GridMeasure(mu.grid, [0, 2, 2, 2, 0, 0]), nu, 0.5, mode="density")
    with pytest.raises(BadParameter):
        displacement_interpolate(mu, nu, 1.5)
    with pytest.raises(BadParameter):
        displacement_interpolate(mu, nu, 0.5, mode="other")


@given(seeds)
def test_quantile_inverts_cdf(seed):
    mu, _ = _pair(seed, 8, floor=0.05)
    q = np.linspace(0.01, 0.99, 50)
    x = quantile_function(mu, q)
    F = np.interp(x, mu.grid.edges, mu.cdf_nodes())
    np.testing.assert_allclose(F, q, atol=1e-12)


def test_density_w2_of_translated_block():
    # uniform block on [0, 1/2] moved to [1/2, 1]: every point moves 1/2
    g = Grid(4)
    assert w2_density(GridMeasure(g, [2, 2, 0, 0]), GridMeasure(g, [0, 0, 2, 2])) == pytest.approx(0.5)


def test_density_and_atom_views_agree_on_fine_grids():
    g = Grid(256)
    x = g.centers
    mu = from_density(g, 1 + 0.5 * np.sin(2 * np.pi * x), normalize=True)
    nu = from_density(g, 1 + 0.5 * np.cos(3 * np.pi * x), normalize=True)
    assert abs(w2_density(mu, nu) - w2(mu, nu)) < 5e-3


@given(seeds)
def test_density_coupling_gradient_matches_finite_differences(seed):
    mu, nu = _pair(seed, 6, floor=0.2)
    F, G = mu.cdf_nodes(), nu.cdf_nodes()
    dc = DensityCoupling(F, G, mu.grid.dx)
    gs, gt = dc.grad_source(), dc.grad_target()
    h = 1e-7
    for k in range(1, 6):
        e = np.zeros(7)
        e[k] = h
        fd_s = (DensityCoupling(F + e, G, mu.grid.dx).cost() - DensityCoupling(F - e, G, mu.grid.dx).cost()) / (2 * h)
        fd_t = (DensityCoupling(F, G + e, mu.grid.dx).cost() - DensityCoupling(F, G - e, mu.grid.dx).cost()) / (2 * h)
        assert gs[k] == pytest.approx(fd_s, abs=1e-6)
        assert gt[k] == pytest.approx(fd_t, abs=1e-6)


def test_density_coupling_hessian_matches_finite_differences():
    mu, nu = _pair(11, 5, floor=0.2)
    F, G, dx = mu.cdf_nodes(), nu.cdf_nodes(), mu.grid.dx
    rows, cols, vals, rs, cs = DensityCoupling(F, G, dx).hessian_terms()
    H = np.zeros((6, 6))
    src = (rs == 0) & (cs == 0)
    np.add.at(H, (rows[src], cols[src]), vals[src])
    h = 1e-6
    for k in range(1, 5):
        e = np.zeros(6)
        e[k] = h
        fd = (DensityCoupling(F + e, G, dx).grad_source() - DensityCoupling(F - e, G, dx).grad_source()) / (2 * h)
        np.testing.assert_allclose(H[k, 1:5], fd[1:5], atol=1e-5)


def test_cell_potential_first_variation():
    mu, nu = _pair(5, 12, floor=0.1)
    phi = cell_potential(mu, nu)
    other = _pair(6, 12, floor=0.1)[0]
    d = other.rho - mu.rho
    eps = 1e-6
    fd = (w2_density(from_density(mu.grid, mu.rho + eps * d), nu) ** 2 - w2_density(mu, nu) ** 2) / eps
    assert fd == pytest.approx(np.dot(phi, d) * mu.grid.dx, abs=1e-5)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from congestflow.exceptions import (
    BadParameter,
    GridMismatch,
    InvalidStep,
    MassMismatch,
    NegativeDensity,
    ZeroMass,
)
from congestflow.grid import (
    AtomList,
    DiscreteCurve,
    Grid,
    GridMeasure,
    HeatFlowSmoother,
    _neumann_bands,
    check_same_grid,
    from_density,
    heat_flow,
    rebin_atoms,
    uniform,
)
from congestflow.functionals import internal_energy

densities = st.lists(st.floats(0.01, 10.0), min_size=2, max_size=40)


def test_grid_geometry():
    g = Grid(4)
    assert g.dx == 0.25
    np.testing.assert_allclose(g.centers, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(g.edges, [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(BadParameter):
        Grid(1)
    with pytest.raises(BadParameter):
        Grid(2.5)


def test_grid_measure_validation():
    g = Grid(4)
    with pytest.raises(MassMismatch):
        GridMeasure(g, np.ones(4) * 2)
    with pytest.raises(NegativeDensity):
        GridMeasure(g, [2.0, -1.0, 1.0, 2.0])
    with pytest.raises(BadParameter):
        GridMeasure(g, np.ones(3))
    with pytest.raises(ZeroMass):
        from_density(g, np.zeros(4), normalize=True)


def test_uniform_cdf_nodes():
    np.testing.assert_allclose(uniform(Grid(4)).cdf_nodes(), [0, 0.25, 0.5, 0.75, 1.0])


@given(densities)
def test_from_density_normalizes(values):
    g = Grid(len(values))
    mu = from_density(g, values, normalize=True)
    assert abs(mu.rho.sum() * g.dx - 1) <= 1e-12
    np.testing.assert_allclose(mu.rho / mu.rho[0], np.array(values) / values[0], rtol=1e-12)


def test_check_same_grid():
    with pytest.raises(GridMismatch):
        check_same_grid(uniform(Grid(3)), uniform(Grid(4)))


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.integers(2, 30))
def test_rebin_preserves_mass_and_interior_mean(positions, n):
    grid = Grid(n)
    pos = np.clip(positions, grid.centers[0], grid.centers[-1])
    atoms = AtomList(pos, np.full(pos.size, 1.0 / pos.size))
    mu = rebin_atoms(atoms, grid)
    assert abs(mu.masses.sum() - 1) <= 1e-12
    assert abs(np.dot(mu.masses, grid.centers) - atoms.mean()) <= 1e-12


def test_curve_shape_and_times():
    g = Grid(4)
    c = DiscreteCurve.from_array(g, 2.0, np.ones((5, 4)))
    assert c.N == 4 and c.tau == 0.5
    np.testing.assert_allclose(c.times, [0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(BadParameter):
        DiscreteCurve(g, 1.0, 3, c.slices)


def test_neumann_matrix_conserves_mass():
    # columns of I - r L sum to one, so each implicit step preserves total mass
    n, r = 7, 0.3
    ab = _neumann_bands(n, r)
    dense = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
    np.testing.assert_allclose(dense.sum(axis=0), np.ones(n), atol=1e-15)


@given(densities, st.floats(1e-3, 0.5))
def test_heat_flow_mass_and_entropy(values, s):
    g = Grid(len(values))
    mu = from_density(g, values, normalize=True)
    out = heat_flow(mu, s)
    assert abs(out.rho.sum() * g.dx - 1) <= 1e-12
    for m in (1, 2, 3):
        assert internal_energy(out, m) <= internal_energy(mu, m) * (1 + 1e-12)


def test_heat_flow_edge_cases():
    g = Grid(8)
    mu = from_density(g, np.arange(1, 9), normalize=True)
    assert heat_flow(mu, 0.0) is mu
    np.testing.assert_allclose(heat_flow(uniform(g), 0.3).rho, 1.0, atol=1e-14)
    with pytest.raises(InvalidStep):
        heat_flow(mu, 0.1, 0.0)
    with pytest.raises(BadParameter):
        heat_flow(mu, -1.0)
    assert np.ptp(heat_flow(mu, 50.0).rho) < 1e-8


def test_heat_flow_smoother_estimator_api():
    X = np.vstack([np.arange(1, 9), np.ones(8)]).astype(float)
    sm = HeatFlowSmoother(duration=0.05)
    with pytest.raises(NotFittedError):
        sm.transform(X)
    out = sm.fit_transform(X)
    assert out.shape == X.shape
    np.testing.assert_allclose(out.sum(axis=1) / 8, 1.0, atol=1e-12)
    assert clone(sm).get_params() == {"duration": 0.05, "substep": None}
    with pytest.raises(GridMismatch):
        sm.transform(np.ones((1, 4)))

"""Uniform grids on [0, 1], probability densities, curves and a Neumann heat flow."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    BadParameter,
    GridMismatch,
    InvalidStep,
    MassMismatch,
    NegativeDensity,
    ZeroMass,
)

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [0, 1] into ``n`` cells."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise BadParameter(f"grid needs an integer n >= 2, got {self.n!r}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        c = (np.arange(self.n) + 0.5) / self.n
        c.flags.writeable = False
        return c

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.arange(self.n + 1) / self.n
        e.flags.writeable = False
        return e


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability density, constant on each cell of ``grid``.

    Transport routines read it as atoms of mass ``rho[i] * dx`` sitting at the
    cell centers; integral functionals read it as a piecewise-constant density.
    """

    grid: Grid
    rho: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.rho)
        if rho.shape != (self.grid.n,):
            raise BadParameter(f"expected {self.grid.n} cell values, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise BadParameter("density values must be finite")
        if np.any(rho < 0):
            raise NegativeDensity("density has negative entries")
        mass = rho.sum() * self.grid.dx
        if abs(mass - 1.0) > MASS_TOL:
            raise MassMismatch(f"total mass {mass!r} differs from 1")
        object.__setattr__(self, "rho", rho)

    @property
    def masses(self) -> np.ndarray:
        return self.rho * self.grid.dx

    def cdf_nodes(self) -> np.ndarray:
        """Cumulative mass at the n + 1 cell edges, pinned to 0 and 1."""
        F = np.empty(self.grid.n + 1)
        F[0] = 0.0
        np.cumsum(self.masses, out=F[1:])
        F[-1] = 1.0
        return np.minimum(F, 1.0)

    def __eq__(self, other):
        if not isinstance(other, GridMeasure):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.rho, other.rho)

    __hash__ = None

    def __repr__(self):
        return f"GridMeasure(n={self.grid.n}, rho={np.array2string(self.rho, threshold=8)})"


def uniform(grid: Grid) -> GridMeasure:
    return GridMeasure(grid, np.ones(grid.n))


def from_density(grid: Grid, values, normalize: bool = False) -> GridMeasure:
    """Build a GridMeasure from raw cell values.

    With ``normalize`` the values are divided by their total mass; otherwise
    the mass must already be 1 up to 1e-9 and is then rescaled exactly.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != (grid.n,):
        raise BadParameter(f"expected {grid.n} values, got shape {vals.shape}")
    if np.any(vals < 0):
        raise NegativeDensity("density has negative entries")
    mass = vals.sum() * grid.dx
    if normalize:
        if mass <= 0:
            raise ZeroMass("cannot normalize a density with zero mass")
    elif abs(mass - 1.0) > 1e-9:
        raise MassMismatch(f"total mass {mass!r} differs from 1")
    return GridMeasure(grid, vals / mass)


def from_cdf_nodes(grid: Grid, F: np.ndarray) -> GridMeasure:
    """Inverse of ``GridMeasure.cdf_nodes`` for a nondecreasing edge CDF."""
    rho = np.maximum(np.diff(F), 0.0) / grid.dx
    return GridMeasure(grid, rho / (rho.sum() * grid.dx))


def check_same_grid(*measures) -> Grid:
    grid = measures[0].grid
    for m in measures[1:]:
        if m.grid != grid:
            raise GridMismatch(f"grids differ: n={grid.n} vs n={m.grid.n}")
    return grid


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """N + 1 densities on a common grid, slice k living at time k * T / N."""

    grid: Grid
    T: float
    N: int
    slices: tuple

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise BadParameter("curve needs N >= 1 and T > 0")
        slices = tuple(self.slices)
        if len(slices) != self.N + 1:
            raise BadParameter(f"expected {self.N + 1} slices, got {len(slices)}")
        check_same_grid(*slices)
        if slices[0].grid != self.grid:
            raise GridMismatch("slices do not live on the curve grid")
        object.__setattr__(self, "slices", slices)

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.tau

    def densities(self) -> np.ndarray:
        """(N + 1, n) array of slice densities."""
        return np.vstack([s.rho for s in self.slices])

    @classmethod
    def from_array(cls, grid: Grid, T: float, rho: np.ndarray) -> "DiscreteCurve":
        rho = np.asarray(rho, dtype=float)
        return cls(grid, T, rho.shape[0] - 1, tuple(GridMeasure(grid, r) for r in rho))

    def replace_slice(self, k: int, measure: GridMeasure) -> "DiscreteCurve":
        slices = list(self.slices)
        slices[k] = measure
        return DiscreteCurve(self.grid, self.T, self.N, tuple(slices))


@dataclass(frozen=True, eq=False)
class AtomList:
    """Finitely many point masses on [0, 1] with total mass 1."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions)
        mass = _frozen(self.masses)
        if pos.shape != mass.shape or pos.ndim != 1:
            raise BadParameter("positions and masses must be 1-D arrays of equal length")
        if np.any(mass < 0):
            raise NegativeDensity("atoms carry negative mass")
        if abs(mass.sum() - 1.0) > MASS_TOL:
            raise MassMismatch(f"atom masses sum to {mass.sum()!r}")
        if np.any(pos < -1e-12) or np.any(pos > 1 + 1e-12):
            raise BadParameter("atom positions must lie in [0, 1]")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mass)

    @classmethod
    def from_measure(cls, mu: GridMeasure) -> "AtomList":
        masses = mu.masses
        return cls(mu.grid.centers.copy(), masses / masses.sum())

    def mean(self) -> float:
        return float(np.dot(self.positions, self.masses))


def rebin_atoms(atoms: AtomList, grid: Grid) -> GridMeasure:
    """Split each atom linearly between its two nearest cell centers.

    Mass and first moment are preserved for atoms between the first and last
    centers; atoms outside that range go entirely to the closest end cell.
    """
    x0 = grid.centers[0]
    s = (atoms.positions - x0) / grid.dx
    left = np.clip(np.floor(s).astype(int), 0, grid.n - 2)
    w = np.clip(s - left, 0.0, 1.0)
    cell_mass = np.zeros(grid.n)
    np.add.at(cell_mass, left, atoms.masses * (1.0 - w))
    np.add.at(cell_mass, left + 1, atoms.masses * w)
    rho = cell_mass / grid.dx
    return GridMeasure(grid, rho / (rho.sum() * grid.dx))


def _neumann_bands(n: int, r: float) -> np.ndarray:
    """Banded form of I - r * L with L the reflecting second difference."""
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = ab[1, -1] = 1.0 + r
    return ab


def heat_flow(mu: GridMeasure, s: float, ds: float | None = None) -> GridMeasure:
    """Implicit Euler approximation of the heat semigroup with no-flux walls.

    ``ds`` defaults to ``s / 100``; the last step is shortened so the substeps
    add up to ``s`` exactly.
    """
    if s < 0:
        raise BadParameter("heat flow duration must be nonnegative")
    if s == 0:
        return mu
    if ds is None:
        ds = s / 100.0
    if not ds > 0:
        raise InvalidStep(f"substep must be positive, got {ds!r}")
    steps = max(1, math.ceil(s / ds - 1e-9))
    h = s / steps
    grid = mu.grid
    ab = _neumann_bands(grid.n, h / grid.dx**2)
    u = mu.rho.copy()
    for _ in range(steps):
        u = solve_banded((1, 1), ab, u)
        u /= u.sum() * grid.dx
    return GridMeasure(grid, np.maximum(u, 0.0))


class HeatFlowSmoother(TransformerMixin, BaseEstimator):
    """Apply the Neumann heat flow to each row of an array of cell densities.

    Parameters
    ----------
    duration : float
        Total diffusion time.
    substep : float or None
        Implicit Euler step; ``None`` uses ``duration / 100``.
    """

    def __init__(self, duration: float = 0.1, substep: float | None = None):
        self.duration = duration
        self.substep = substep

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        if np.any(X < 0):
            raise NegativeDensity("rows must be nonnegative densities")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != self.n_features_in_:
            raise GridMismatch(f"fitted on {self.n_features_in_} cells, got {X.shape[1]}")
        grid = Grid(X.shape[1])
        out = np.empty_like(X)
        for i, row in enumerate(X):
            mu = from_density(grid, row, normalize=True)
            out[i] = heat_flow(mu, self.duration, self.substep).rho
        return out


def stack_measures(measures: Sequence[GridMeasure]) -> np.ndarray:
    return np.vstack([m.rho for m in measures])

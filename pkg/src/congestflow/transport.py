"""Exact one-dimensional quadratic optimal transport on uniform grids.

Two readings of a ``GridMeasure`` appear here.

* Atomic: mass ``rho[i] * dx`` sits at center ``x_i``.  ``w2``, the LP oracle,
  ``kantorovich_potential`` and ``displacement_interpolate`` use this view.
* Piecewise-constant: the density is spread uniformly over each cell.
  ``w2_density``, ``cell_potential`` and ``DensityCoupling`` use this view; it is
  the one the solver works with because its cost is smooth in the density.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .exceptions import BadParameter, NonpositiveSource, OracleTooLarge
from .grid import AtomList, Grid, GridMeasure, check_same_grid, rebin_atoms

LP_ORACLE_MAX_CELLS = 64
TIE_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class KantorovichPotential:
    grid: Grid
    phi: np.ndarray


@dataclass(frozen=True, eq=False)
class TransportPlan:
    coupling: np.ndarray


def _cumulative(masses: np.ndarray) -> np.ndarray:
    c = np.cumsum(masses)
    c /= c[-1]
    c[-1] = 1.0
    return c


def _matching(ca: np.ndarray, cb: np.ndarray):
    """Monotone matching of two cumulative mass vectors.

    Returns the lengths of the quantile intervals and the index of the source
    and target atom active on each one.
    """
    q = np.union1d(ca, cb)
    q = np.concatenate(([0.0], q[(q > 0.0) & (q < 1.0)], [1.0]))
    lengths = np.diff(q)
    keep = lengths > 0
    mid = 0.5 * (q[:-1] + q[1:])[keep]
    i = np.minimum(np.searchsorted(ca, mid), ca.size - 1)
    j = np.minimum(np.searchsorted(cb, mid), cb.size - 1)
    return lengths[keep], i, j


def _sorted_atoms(atoms: AtomList):
    order = np.argsort(atoms.positions, kind="stable")
    return atoms.positions[order], atoms.masses[order]


def w2_atoms(a: AtomList, b: AtomList) -> float:
    """W2 between two atom lists, by monotone matching."""
    xa, ma = _sorted_atoms(a)
    xb, mb = _sorted_atoms(b)
    lengths, i, j = _matching(_cumulative(ma), _cumulative(mb))
    return float(np.sqrt(max(np.dot(lengths, (xa[i] - xb[j]) ** 2), 0.0)))


def w2_squared(mu: GridMeasure, nu: GridMeasure) -> float:
    """Squared W2 between the atomic views of ``mu`` and ``nu``."""
    grid = check_same_grid(mu, nu)
    x = grid.centers
    lengths, i, j = _matching(_cumulative(mu.masses), _cumulative(nu.masses))
    return float(max(np.dot(lengths, (x[i] - x[j]) ** 2), 0.0))


def w2(mu: GridMeasure, nu: GridMeasure) -> float:
    """W2 between the atomic views of ``mu`` and ``nu``.

    Examples
    --------
    >>> g = Grid(4)
    >>> from congestflow.grid import from_density
    >>> w2(from_density(g, [4, 0, 0, 0]), from_density(g, [0, 0, 0, 4]))
    0.75
    """
    return float(np.sqrt(w2_squared(mu, nu)))


def monotone_plan(mu: GridMeasure, nu: GridMeasure) -> TransportPlan:
    grid = check_same_grid(mu, nu)
    lengths, i, j = _matching(_cumulative(mu.masses), _cumulative(nu.masses))
    plan = np.zeros((grid.n, grid.n))
    np.add.at(plan, (i, j), lengths)
    return TransportPlan(plan)


def lp_oracle_w2(mu: GridMeasure, nu: GridMeasure) -> float:
    """W2 from a generic linear program over couplings of the cell masses.

    Independent of the quantile formula: the LP knows nothing about the
    ordering of the line, only the cost matrix.
    """
    grid = check_same_grid(mu, nu)
    n = grid.n
    if n > LP_ORACLE_MAX_CELLS:
        raise OracleTooLarge(f"LP oracle is limited to n <= {LP_ORACLE_MAX_CELLS}, got {n}")
    x = grid.centers
    cost = (x[:, None] - x[None, :]) ** 2
    eye = sparse.identity(n, format="csr")
    ones = sparse.csr_matrix(np.ones((1, n)))
    a_eq = sparse.vstack([sparse.kron(eye, ones), sparse.kron(ones, eye)], format="csr")
    b_eq = np.concatenate([mu.masses, nu.masses])
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    plan = np.maximum(res.x, 0.0)
    return float(np.sqrt(max(np.dot(plan, cost.ravel()), 0.0)))


def _atomic_interface_map(ca: np.ndarray, cb: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Image of each interior cell edge under the monotone atomic map.

    When the cumulative source mass at an edge coincides with a cumulative
    target level, the map is set-valued there; the midpoint of the two
    admissible target atoms is used.
    """
    levels = ca[:-1]
    lo = np.minimum(np.searchsorted(cb, levels - TIE_TOL, side="left"), cb.size - 1)
    hi = np.minimum(np.searchsorted(cb, levels + TIE_TOL, side="right"), cb.size - 1)
    return 0.5 * (y[lo] + y[hi])


def kantorovich_potential(
    rho: GridMeasure, target: GridMeasure, require_positive: bool = True
) -> KantorovichPotential:
    """First variation of ``nu -> W2^2(nu, target)`` at ``rho`` (atomic view).

    The edge-wise slope ``2 (x - T(x))`` is integrated from cell to cell, with
    the potential pinned to zero on the first cell.  Between two centers the
    increment is exact for the piecewise-linear atomic transport cost, so the
    returned values are the discrete dual variables of the matching.
    """
    grid = check_same_grid(rho, target)
    if require_positive and np.any(rho.rho <= 0):
        raise NonpositiveSource("source density must be positive in every cell")
    x = grid.centers
    ca = _cumulative(rho.masses)
    cb = _cumulative(target.masses)
    t_edge = _atomic_interface_map(ca, cb, x)
    slope = 2.0 * (grid.edges[1:-1] - t_edge)
    phi = np.concatenate(([0.0], np.cumsum(slope * grid.dx)))
    return KantorovichPotential(grid, phi)


def c_transform(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """``phi^c(y_j) = min_i |x_i - y_j|^2 - phi_i`` by exhaustive search."""
    x = grid.centers
    return np.min((x[:, None] - x[None, :]) ** 2 - phi[:, None], axis=0)


def displacement_interpolate(
    mu: GridMeasure,
    nu: GridMeasure,
    t: float,
    mode: str = "atoms",
    resolution: int | None = None,
):
    """Point at time ``t`` on the constant-speed geodesic from ``mu`` to ``nu``.

    ``mode="atoms"`` moves every matched piece of mass along a straight line and
    returns an ``AtomList``.  ``mode="density"`` interpolates the quantile
    functions of the piecewise-constant views and rebins ``resolution`` equal
    atoms (default ``16 n``) onto the grid.
    """
    grid = check_same_grid(mu, nu)
    if not 0.0 <= t <= 1.0:
        raise BadParameter(f"t must lie in [0, 1], got {t!r}")
    if mode == "atoms":
        x = grid.centers
        lengths, i, j = _matching(_cumulative(mu.masses), _cumulative(nu.masses))
        pos = (1.0 - t) * x[i] + t * x[j]
        return AtomList(pos, lengths / lengths.sum())
    if mode == "density":
        if np.any(mu.rho <= 0) or np.any(nu.rho <= 0):
            raise NonpositiveSource("density mode needs strictly positive endpoints")
        return quantile_interpolate(mu, nu, t, resolution)
    raise BadParameter(f"unknown interpolation mode {mode!r}")


def quantile_function(mu: GridMeasure, q: np.ndarray) -> np.ndarray:
    """Quantile function of the piecewise-constant view (left inverse on flats)."""
    F = mu.cdf_nodes()
    edges = mu.grid.edges
    k = np.clip(np.searchsorted(F, q, side="left"), 1, mu.grid.n)
    lo, hi = F[k - 1], F[k]
    width = hi - lo
    frac = np.divide(q - lo, width, out=np.zeros_like(q), where=width > 0)
    return edges[k - 1] + np.clip(frac, 0.0, 1.0) * mu.grid.dx


def quantile_interpolate(
    mu: GridMeasure, nu: GridMeasure, t: float, resolution: int | None = None
) -> GridMeasure:
    grid = mu.grid
    m = resolution or 16 * grid.n
    if m < 16 * grid.n:
        raise BadParameter("quantile resolution must be at least 16 n")
    q = (np.arange(m) + 0.5) / m
    pos = (1.0 - t) * quantile_function(mu, q) + t * quantile_function(nu, q)
    return rebin_atoms(AtomList(np.clip(pos, 0.0, 1.0), np.full(m, 1.0 / m)), grid)


class DensityCoupling:
    """Monotone coupling of two piecewise-constant densities given by edge CDFs.

    Both quantile functions are piecewise linear, so the cost, its gradient with
    respect to the edge CDF values of either side, and its Hessian are all
    integrals of low-degree polynomials over the merged quantile pieces and are
    evaluated exactly with Simpson's rule.
    """

    def __init__(self, F_src: np.ndarray, F_tgt: np.ndarray, dx: float):
        self.n = F_src.size - 1
        self.dx = dx
        q = np.union1d(F_src, F_tgt)
        q = np.concatenate(([0.0], q[(q > 0.0) & (q < 1.0)], [1.0]))
        length = np.diff(q)
        keep = length > 0
        qa, qb = q[:-1][keep], q[1:][keep]
        self.length = length[keep]
        qm = 0.5 * (qa + qb)
        n = self.n
        self.i = np.clip(np.searchsorted(F_src, qm, side="right") - 1, 0, n - 1)
        self.j = np.clip(np.searchsorted(F_tgt, qm, side="right") - 1, 0, n - 1)
        ws = F_src[self.i + 1] - F_src[self.i]
        wt = F_tgt[self.j + 1] - F_tgt[self.j]
        self.rho_src = ws / dx
        self.rho_tgt = wt / dx
        # positions in units of cells, at the left end, middle and right end of each piece
        pts = np.stack([qa, qm, qb])
        self.xs = self.i + (pts - F_src[self.i]) / ws
        self.ys = self.j + (pts - F_tgt[self.j]) / wt

    def cost(self) -> float:
        d2 = ((self.xs - self.ys) * self.dx) ** 2
        return float(np.dot(self.length, d2[0] + 4.0 * d2[1] + d2[2]) / 6.0)

    def _simpson(self, values: np.ndarray) -> np.ndarray:
        return (values[0] + 4.0 * values[1] + values[2]) / 6.0

    def grad_source(self) -> np.ndarray:
        """d cost / d F_src at all n + 1 edges."""
        d = (self.xs - self.ys) * self.dx
        right = self.xs - self.i
        left = 1.0 - right
        scale = -2.0 * self.length / self.rho_src
        g = np.zeros(self.n + 1)
        np.add.at(g, self.i, scale * self._simpson(d * left))
        np.add.at(g, self.i + 1, scale * self._simpson(d * right))
        return g

    def grad_target(self) -> np.ndarray:
        """d cost / d F_tgt at all n + 1 edges."""
        d = (self.ys - self.xs) * self.dx
        right = self.ys - self.j
        left = 1.0 - right
        scale = -2.0 * self.length / self.rho_tgt
        g = np.zeros(self.n + 1)
        np.add.at(g, self.j, scale * self._simpson(d * left))
        np.add.at(g, self.j + 1, scale * self._simpson(d * right))
        return g

    def hessian_terms(self):
        """Second derivatives as (rows, cols, values, row_side, col_side).

        Sides are 0 for source edges and 1 for target edges.  The Hessian is the
        quadratic form ``2 * int (dF_src(x(q)) - dF_tgt(y(q)))^2 / (rho g) dq``.
        """
        xr = self.xs - self.i
        yr = self.ys - self.j
        basis = [(1.0 - xr, self.i, 0, 1.0), (xr, self.i + 1, 0, 1.0),
                 (1.0 - yr, self.j, 1, -1.0), (yr, self.j + 1, 1, -1.0)]
        w = 2.0 * (self.length / self.rho_src) / self.rho_tgt
        rows, cols, vals, rs, cs = [], [], [], [], []
        for a, (va, ia, sa, ga) in enumerate(basis):
            for b, (vb, ib, sb, gb) in enumerate(basis):
                if b < a:
                    continue
                v = w * ga * gb * self._simpson(va * vb)
                rows.append(ia)
                cols.append(ib)
                vals.append(v)
                rs.append(np.full(ia.size, sa))
                cs.append(np.full(ib.size, sb))
                if b != a:
                    rows.append(ib)
                    cols.append(ia)
                    vals.append(v)
                    rs.append(np.full(ib.size, sb))
                    cs.append(np.full(ia.size, sa))
        return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                np.concatenate(rs), np.concatenate(cs))


def w2_density(mu: GridMeasure, nu: GridMeasure) -> float:
    """W2 between the piecewise-constant views of ``mu`` and ``nu``."""
    grid = check_same_grid(mu, nu)
    c = DensityCoupling(mu.cdf_nodes(), nu.cdf_nodes(), grid.dx).cost()
    return float(np.sqrt(max(c, 0.0)))


def cell_potential(rho: GridMeasure, target: GridMeasure) -> np.ndarray:
    """Cell averages of the first variation of ``W2^2(., target)`` at ``rho``.

    Piecewise-constant view.  Differences between neighbouring cells equal
    minus the derivative of the cost with respect to the shared edge CDF value;
    the first cell is pinned to zero.
    """
    grid = check_same_grid(rho, target)
    g = DensityCoupling(rho.cdf_nodes(), target.cdf_nodes(), grid.dx).grad_source()
    return np.concatenate(([0.0], -np.cumsum(g[1:-1])))

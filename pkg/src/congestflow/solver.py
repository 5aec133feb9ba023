"""Minimization of the discrete action over curves with a fixed initial slice.

Unknowns are the edge CDFs ``F_k`` of the free slices.  In these coordinates the
slice energies are sums of convex functions of ``diff(F_k)`` and the transport
terms are smooth (see ``DensityCoupling``), so Newton steps on one slice solve
a tridiagonal system and Newton steps on the whole curve a sparse one.

``solve`` runs Gauss-Seidel sweeps of exact slice minimizations, alternating
forward and backward order, and then a global Newton phase on all free slices
that drives the first-order residual below ``slice_tol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    BadParameter,
    Infeasible,
    InversionFailure,
    NoConvergence,
    WrongPenalization,
)
from .functionals import (
    GPlusW,
    PrescribedTarget,
    ProblemSpec,
    congestion_from_name,
    discrete_action,
    potential_from_name,
)
from .grid import DiscreteCurve, Grid, GridMeasure, check_same_grid, from_density, uniform
from .transport import DensityCoupling, cell_potential, quantile_interpolate

FIXED, INTERIOR, TERMINAL = 0, 1, 2


@dataclass(frozen=True)
class SolverParams:
    max_sweeps: int = 30
    sweep_tol: float = 1e-10
    slice_tol: float = 1e-8
    damping: float = 0.5
    bisect_tol: float = 1e-13
    density_floor: float = 1e-300
    slice_method: str = "newton"
    max_newton: int = 200
    polish: bool = True
    fixed_point_iters: int = 20000
    lambda_schedule: tuple | None = None

    def __post_init__(self):
        if min(self.sweep_tol, self.slice_tol, self.bisect_tol, self.density_floor) <= 0:
            raise BadParameter("tolerances and density floor must be positive")
        if not 0 < self.damping <= 1:
            raise BadParameter("damping must lie in (0, 1]")
        if self.max_sweeps < 0 or self.max_newton < 1:
            raise BadParameter("iteration budgets must be positive")
        if self.slice_method not in ("newton", "fixed_point"):
            raise BadParameter(f"unknown slice method {self.slice_method!r}")
        if self.lambda_schedule is not None:
            start, factor, steps = self.lambda_schedule
            if start <= 0 or not 0 < factor < 1 or int(steps) != steps or steps < 1:
                raise BadParameter("lambda schedule needs start > 0, 0 < factor < 1, steps >= 1")


@dataclass
class SolveReport:
    action_history: list = field(default_factory=list)
    slice_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sweeps_used: int = 0
    newton_steps: int = 0
    converged: bool = False
    lambdas: list = field(default_factory=list)


class _Energy:
    """Per-slice integrand ``e(r) = f(r) + lam (r ln r + 1) + V r`` and derivatives."""

    def __init__(self, f, lam: float, pot: np.ndarray, weight: float, floor: float):
        self.f, self.lam, self.pot, self.weight, self.floor = f, lam, pot, weight, floor

    def value(self, r: np.ndarray) -> np.ndarray:
        out = self.f.f(r) + self.pot * r
        if self.lam:
            safe = np.maximum(r, self.floor)
            out = out + self.lam * (r * np.log(safe) + 1.0)
        return out

    def first(self, r: np.ndarray) -> np.ndarray:
        out = self.f.fp(r) + self.pot
        if self.lam:
            out = out + self.lam * (np.log(np.maximum(r, self.floor)) + 1.0)
        return out

    def second(self, r: np.ndarray) -> np.ndarray:
        out = self.f.fpp(r)
        if self.lam:
            out = out + self.lam / np.maximum(r, self.floor)
        return out


class _CurveProblem:
    """Action restricted to a stack of edge CDFs with per-slice roles."""

    def __init__(self, spec: ProblemSpec, F: np.ndarray, kinds, floor: float):
        self.spec = spec
        self.F = np.array(F, dtype=float)
        self.kinds = list(kinds)
        self.n = spec.grid.n
        self.dx = spec.grid.dx
        self.tau = spec.tau
        interior = _Energy(spec.congestion, spec.lam, spec.V.values, self.tau, floor)
        self.energy = {INTERIOR: interior}
        if isinstance(spec.psi, GPlusW):
            self.energy[TERMINAL] = _Energy(spec.psi.g, spec.lambda_N, spec.psi.W.values, 1.0, floor)

    def rho(self, F: np.ndarray) -> np.ndarray:
        return np.diff(F, axis=-1) / self.dx

    def _pairs_touching(self, free):
        pairs = set()
        for k in free:
            if k > 0:
                pairs.add(k)
            if k + 1 < len(self.kinds):
                pairs.add(k + 1)
        return sorted(pairs)

    def local_objective(self, F: np.ndarray, free) -> float:
        """Terms of the action that depend on the slices in ``free``."""
        total = 0.0
        for p in self._pairs_touching(free):
            total += DensityCoupling(F[p - 1], F[p], self.dx).cost() / (2.0 * self.tau)
        for k in free:
            e = self.energy[self.kinds[k]]
            total += e.weight * float(np.sum(e.value(self.rho(F[k])))) * self.dx
        return total

    def gradient_hessian(self, free):
        """Gradient and sparse Hessian in the interior edge values of ``free``."""
        n, m = self.n, self.n - 1
        pos = {k: i for i, k in enumerate(free)}
        posmap = np.full(len(self.kinds), -1)
        posmap[free] = np.arange(len(free))
        grad = np.zeros((len(free), n + 1))
        rows, cols, vals = [], [], []
        for p in self._pairs_touching(free):
            c = DensityCoupling(self.F[p - 1], self.F[p], self.dx)
            scale = 1.0 / (2.0 * self.tau)
            if p - 1 in pos:
                grad[pos[p - 1]] += scale * c.grad_source()
            if p in pos:
                grad[pos[p]] += scale * c.grad_target()
            r, cc, v, rs, cs = c.hessian_terms()
            br = posmap[np.where(rs == 0, p - 1, p)]
            bc = posmap[np.where(cs == 0, p - 1, p)]
            ok = (r > 0) & (r < n) & (cc > 0) & (cc < n) & (br >= 0) & (bc >= 0)
            rows.append(br[ok] * m + r[ok] - 1)
            cols.append(bc[ok] * m + cc[ok] - 1)
            vals.append(scale * v[ok])
        for k in free:
            b = pos[k]
            e = self.energy[self.kinds[k]]
            r = self.rho(self.F[k])
            d1 = e.weight * e.first(r)
            d2 = e.weight * e.second(r) / self.dx
            grad[b, 1:n] += d1[:-1] - d1[1:]
            idx = b * m + np.arange(m)
            rows += [idx, idx[:-1], idx[1:]]
            cols += [idx, idx[1:], idx[:-1]]
            vals += [d2[:-1] + d2[1:], -d2[1:-1], -d2[1:-1]]
        size = len(free) * m
        H = sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )
        return grad[:, 1:n], H

    def residuals_from_gradient(self, grad: np.ndarray, free) -> np.ndarray:
        """Half-range of the first-order expression on each free slice."""
        out = np.empty(len(free))
        for b, k in enumerate(free):
            w = self.energy[self.kinds[k]].weight
            r = np.concatenate(([0.0], -np.cumsum(grad[b]) / w))
            out[b] = 0.5 * (r.max() - r.min())
        return out

    def newton(self, free, tol: float, max_iter: int, history: list | None = None):
        """Damped Newton on the slices in ``free``; returns (residuals, steps)."""
        free = list(free)
        steps = 0
        stalled = False
        for _ in range(max_iter):
            grad, H = self.gradient_hessian(free)
            res = self.residuals_from_gradient(grad, free)
            if res.max() <= tol:
                return res, steps
            d = spsolve(H, -grad.ravel()).reshape(grad.shape)
            if not np.all(np.isfinite(d)):
                raise NoConvergence("singular Newton system")
            dF = np.zeros((len(free), self.n + 1))
            dF[:, 1:-1] = d
            r = self.rho(self.F[free])
            dr = np.diff(dF, axis=1) / self.dx
            shrink = dr < 0
            amax = 1.0
            if np.any(shrink):
                amax = min(1.0, 0.99 * float(np.min(r[shrink] / -dr[shrink])))
            f0 = self.local_objective(self.F, free)
            slope = float(np.dot(grad.ravel(), d.ravel()))
            slack = 1e-13 * (1.0 + abs(f0))
            a = amax
            while True:
                Fn = self.F.copy()
                Fn[free] += a * dF
                if self.local_objective(Fn, free) <= f0 + 1e-4 * a * slope + slack:
                    break
                a *= 0.5
                if a < 1e-14:
                    stalled = True
                    break
            if stalled:
                break
            self.F = Fn
            steps += 1
            if history is not None:
                history.append(self.action())
        grad, _ = self.gradient_hessian(free)
        return self.residuals_from_gradient(grad, free), steps

    def action(self) -> float:
        total = 0.0
        for p in range(1, len(self.kinds)):
            total += DensityCoupling(self.F[p - 1], self.F[p], self.dx).cost() / (2.0 * self.tau)
        for k, kind in enumerate(self.kinds):
            if kind in self.energy:
                e = self.energy[kind]
                total += e.weight * float(np.sum(e.value(self.rho(self.F[k])))) * self.dx
        return total

    def free_slices(self):
        return [k for k, kind in enumerate(self.kinds) if kind != FIXED]


def _to_measure(grid: Grid, F: np.ndarray) -> GridMeasure:
    rho = np.maximum(np.diff(F), 0.0) / grid.dx
    return GridMeasure(grid, rho / (rho.sum() * grid.dx))


def _edge_cdf(mu: GridMeasure) -> np.ndarray:
    return mu.cdf_nodes()


def _slice_kinds(spec: ProblemSpec):
    kinds = [FIXED] + [INTERIOR] * (spec.N - 1)
    kinds.append(TERMINAL if isinstance(spec.psi, GPlusW) else FIXED)
    return kinds


def initial_curve(spec: ProblemSpec, mix: float = 1e-3) -> DiscreteCurve:
    """Displacement interpolation from ``rho0`` to the target (or uniform).

    Free slices are blended with a small uniform share so every cell starts
    with positive mass.
    """
    grid = spec.grid
    end = spec.psi.target if isinstance(spec.psi, PrescribedTarget) else uniform(grid)
    slices = [spec.rho0]
    for k in range(1, spec.N + 1):
        if k == spec.N and isinstance(spec.psi, PrescribedTarget):
            slices.append(end)
            continue
        mid = quantile_interpolate(spec.rho0, end, k / spec.N).rho
        slices.append(GridMeasure(grid, (1.0 - mix) * mid + mix))
    return DiscreteCurve(grid, spec.T, spec.N, tuple(slices))


def _curve_from_stack(spec: ProblemSpec, F: np.ndarray, fixed: DiscreteCurve | None = None):
    slices = [_to_measure(spec.grid, Fk) for Fk in F]
    slices[0] = spec.rho0
    if isinstance(spec.psi, PrescribedTarget):
        slices[-1] = spec.psi.target
    return DiscreteCurve(spec.grid, spec.T, spec.N, tuple(slices))


def _check_lambda(spec: ProblemSpec):
    if spec.lam <= 0 and spec.N > 1:
        raise BadParameter("interior slices need a positive entropic weight; use a lambda schedule")
    if spec.lam <= 0 and isinstance(spec.psi, GPlusW):
        raise BadParameter("the terminal slice needs a positive entropic weight")


def slice_residual_vector(rho: GridMeasure, prev: GridMeasure, nxt: GridMeasure | None,
                          spec: ProblemSpec, floor: float = 1e-300) -> np.ndarray:
    """First-order expression of a slice, constant exactly at an optimum.

    Interior: ``f'(rho) + lam ln rho + V + (phi_prev + phi_next) / (2 tau^2)``.
    Terminal: ``g'(rho) + lam_N ln rho + W + phi_prev / (2 tau)``.
    Potentials are cell averages from ``cell_potential``.
    """
    tau = spec.tau
    logs = np.log(np.maximum(rho.rho, floor))
    if nxt is None:
        psi = spec.psi
        return psi.g.fp(rho.rho) + spec.lambda_N * logs + psi.W.values + cell_potential(rho, prev) / (2 * tau)
    phi = cell_potential(rho, prev) + cell_potential(rho, nxt)
    return spec.congestion.fp(rho.rho) + spec.lam * logs + spec.V.values + phi / (2 * tau * tau)


def optimality_residual(curve: DiscreteCurve, spec: ProblemSpec, k: int, floor: float = 1e-300) -> float:
    """Sup-norm distance of slice ``k`` from its first-order condition.

    The normalization constant is chosen optimally, so the value is half the
    range of ``slice_residual_vector``.
    """
    terminal_ok = isinstance(spec.psi, GPlusW)
    if not (1 <= k <= spec.N - 1 or (k == spec.N and terminal_ok)):
        raise BadParameter(f"slice index {k} has no optimality condition")
    nxt = curve.slices[k + 1] if k < spec.N else None
    r = slice_residual_vector(curve.slices[k], curve.slices[k - 1], nxt, spec, floor)
    return float(0.5 * (r.max() - r.min()))


def _g_inverse(y: np.ndarray, fp, lam: float, floor: float, tol: float) -> np.ndarray:
    """Solve ``fp(t) + lam ln t = y`` for ``t > 0`` by safeguarded bisection."""
    G = lambda t: fp(t) + lam * np.log(t)
    lo = np.full_like(y, floor)
    hi = np.ones_like(y)
    for _ in range(2000):
        low_side = G(hi) < y
        if not np.any(low_side):
            break
        hi = np.where(low_side, 2.0 * hi, hi)
    else:
        raise InversionFailure("could not bracket the inverse")
    if np.any(G(lo) > y):
        raise InversionFailure("target value below the range reachable above the density floor")
    # bisect in log space first, then linearly
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        up = G(mid) < y
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi / lo - 1.0 <= tol):
            break
    return 0.5 * (lo + hi)


def _fixed_point_slice(mu: GridMeasure, nu: GridMeasure | None, spec: ProblemSpec,
                       params: SolverParams, init: GridMeasure, terminal: bool) -> GridMeasure:
    grid = spec.grid
    tau = spec.tau
    if terminal:
        fp, lam, pot = spec.psi.g.fp, spec.lambda_N, spec.psi.W.values
    else:
        fp, lam, pot = spec.congestion.fp, spec.lam, spec.V.values
    floor = params.density_floor
    rho = init
    theta = params.damping
    last = math.inf
    for _ in range(params.fixed_point_iters):
        r = slice_residual_vector(rho, mu, nu, spec, floor)
        res = 0.5 * (r.max() - r.min())
        if res <= params.slice_tol:
            return rho
        if res > last:
            theta *= 0.5
        last = res
        if terminal:
            psi = -cell_potential(rho, mu) / (2 * tau) - pot
        else:
            psi = -(cell_potential(rho, mu) + cell_potential(rho, nu)) / (2 * tau * tau) - pot
        mass = lambda c: float(np.sum(_g_inverse(c + psi, fp, lam, floor, params.bisect_tol)) * grid.dx)
        c_lo, c_hi = -1.0 - psi.max(), 1.0 - psi.min()
        while mass(c_lo) > 1.0:
            c_lo -= 2.0 * (1.0 + abs(c_lo))
        while mass(c_hi) < 1.0:
            c_hi += 2.0 * (1.0 + abs(c_hi))
        for _ in range(200):
            c = 0.5 * (c_lo + c_hi)
            if mass(c) < 1.0:
                c_lo = c
            else:
                c_hi = c
            if c_hi - c_lo <= params.bisect_tol * (1.0 + abs(c)):
                break
        new = _g_inverse(0.5 * (c_lo + c_hi) + psi, fp, lam, floor, params.bisect_tol)
        new /= new.sum() * grid.dx
        rho = GridMeasure(grid, (1.0 - theta) * rho.rho + theta * new)
    raise NoConvergence(f"fixed point stalled at residual {last:.3e}")


def solve_slice(mu: GridMeasure, nu: GridMeasure | None, spec: ProblemSpec,
                params: SolverParams, init: GridMeasure, terminal: bool = False) -> GridMeasure:
    """Minimize the action over one slice with its neighbours held fixed.

    ``terminal`` solves the last slice of a ``GPlusW`` problem, which only has
    a neighbour on the left.
    """
    if terminal:
        if not isinstance(spec.psi, GPlusW):
            raise WrongPenalization("terminal slices exist only for GPlusW penalizations")
        if nu is not None:
            raise BadParameter("terminal slices have no right neighbour")
        if spec.lambda_N <= 0:
            raise BadParameter("terminal slice needs a positive entropic weight")
        check_same_grid(mu, init)
    else:
        if nu is None:
            raise BadParameter("interior slices need both neighbours")
        if spec.lam <= 0:
            raise BadParameter("interior slices need a positive entropic weight")
        check_same_grid(mu, nu, init)
    if params.slice_method == "fixed_point":
        return _fixed_point_slice(mu, nu, spec, params, init, terminal)
    stack = [_edge_cdf(mu), _edge_cdf(init)] + ([] if terminal else [_edge_cdf(nu)])
    kinds = [FIXED, TERMINAL if terminal else INTERIOR] + ([] if terminal else [FIXED])
    prob = _CurveProblem(spec, np.vstack(stack), kinds, params.density_floor)
    res, _ = prob.newton([1], params.slice_tol, params.max_newton)
    if res[0] > params.slice_tol:
        raise NoConvergence(f"slice residual {res[0]:.3e} above tolerance")
    return _to_measure(spec.grid, prob.F[1])


def _solve_fixed_lambda(spec: ProblemSpec, params: SolverParams, start: DiscreteCurve):
    report = SolveReport(lambdas=[spec.lam])
    kinds = _slice_kinds(spec)
    F = np.vstack([_edge_cdf(s) for s in start.slices])
    prob = _CurveProblem(spec, F, kinds, params.density_floor)
    free = prob.free_slices()
    current = prob.action()
    if not math.isfinite(current):
        raise Infeasible("initial curve has infinite action")
    report.action_history.append(current)
    inner_tol = 0.1 * params.slice_tol
    forward = True
    for sweep in range(params.max_sweeps):
        order = free if forward else free[::-1]
        for k in order:
            if params.slice_method == "fixed_point":
                curve = _curve_from_stack(spec, prob.F)
                nu = curve.slices[k + 1] if k < spec.N else None
                sub = replace(params, slice_tol=inner_tol)
                new = _fixed_point_slice(curve.slices[k - 1], nu, spec, sub, curve.slices[k], nu is None)
                prob.F[k] = _edge_cdf(new)
            else:
                prob.newton([k], inner_tol, params.max_newton)
        forward = not forward
        report.sweeps_used = sweep + 1
        new_action = prob.action()
        report.action_history.append(new_action)
        decrease = current - new_action
        current = new_action
        if decrease < params.sweep_tol:
            break
    if params.polish and free:
        _, steps = prob.newton(free, inner_tol, params.max_newton, report.action_history)
        report.newton_steps = steps
    curve = _curve_from_stack(spec, prob.F)
    report.slice_residuals = np.array(
        [optimality_residual(curve, spec, k, params.density_floor) for k in free]
    )
    report.converged = bool(report.slice_residuals.size == 0 or report.slice_residuals.max() <= params.slice_tol)
    return curve, report


def lambda_ladder(spec: ProblemSpec, schedule) -> list:
    start, factor, steps = schedule
    ladder = [start * factor**j for j in range(int(steps))]
    ladder = [lam for lam in ladder if lam > spec.lam * (1 + 1e-12)]
    return ladder + [spec.lam]


def solve(spec: ProblemSpec, params: SolverParams = SolverParams(), init: DiscreteCurve | None = None):
    """Minimize the discrete action; returns ``(curve, report)``.

    With ``params.lambda_schedule`` the problem is solved along a decreasing
    sequence of entropic weights ending at ``spec.lam``, each stage warm-started
    from the previous one; the report describes the final stage.
    """
    _check_lambda(spec)
    if init is None:
        init = initial_curve(spec)
    elif init.grid != spec.grid or init.N != spec.N:
        raise BadParameter("initial curve does not match the problem")
    ladder = lambda_ladder(spec, params.lambda_schedule) if params.lambda_schedule else [spec.lam]
    curve = init
    report = None
    for lam in ladder:
        curve, report = _solve_fixed_lambda(spec.with_lambda(lam), params, curve)
    report.lambdas = ladder
    return curve, report


class CongestedFlowSolver(BaseEstimator):
    """Estimator wrapper: ``fit`` takes the initial density, ``predict`` returns
    densities at requested times along the piecewise-geodesic interpolation of
    the solved curve.

    Parameters
    ----------
    horizon, steps : float, int
        Final time and number of time steps.
    lam : float
        Entropic weight on interior slices (and on the terminal slice when a
        terminal cost is used).
    congestion, potential : str
        Names from the built-in libraries, e.g. ``"um:2"`` and ``"quadratic_well"``.
    target : array-like or None
        Prescribed final density.  ``None`` selects the terminal cost
        ``terminal_congestion`` plus ``terminal_potential``.
    """

    def __init__(self, horizon=1.0, steps=8, lam=1e-2, congestion="um:2", potential="zero",
                 potential_scale=1.0, target=None, terminal_congestion="um:2",
                 terminal_potential="zero", slice_tol=1e-8, max_sweeps=30):
        self.horizon = horizon
        self.steps = steps
        self.lam = lam
        self.congestion = congestion
        self.potential = potential
        self.potential_scale = potential_scale
        self.target = target
        self.terminal_congestion = terminal_congestion
        self.terminal_potential = terminal_potential
        self.slice_tol = slice_tol
        self.max_sweeps = max_sweeps

    def _spec(self, rho0: np.ndarray) -> ProblemSpec:
        grid = Grid(rho0.size)
        mu0 = from_density(grid, rho0, normalize=True)
        if self.target is not None:
            tgt = check_array(np.atleast_2d(self.target), ensure_min_features=2).ravel()
            psi = PrescribedTarget(from_density(grid, tgt, normalize=True))
        else:
            psi = GPlusW(congestion_from_name(self.terminal_congestion),
                         potential_from_name(self.terminal_potential, grid))
        V = potential_from_name(self.potential, grid, self.potential_scale)
        return ProblemSpec(grid, float(self.horizon), int(self.steps), float(self.lam), mu0,
                           congestion_from_name(self.congestion), V, psi)

    def fit(self, X, y=None):
        X = check_array(np.atleast_2d(X), ensure_min_features=2)
        if X.shape[0] != 1:
            raise BadParameter("fit expects a single initial density")
        spec = self._spec(X.ravel())
        params = SolverParams(slice_tol=self.slice_tol, max_sweeps=self.max_sweeps)
        self.curve_, self.report_ = solve(spec, params)
        self.action_ = discrete_action(self.curve_, spec)
        self.spec_ = spec
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Densities at the times in ``X`` (shape ``(n_times,)`` or ``(n_times, 1)``)."""
        check_is_fitted(self, "curve_")
        t = check_array(np.reshape(np.asarray(X, dtype=float), (-1, 1))).ravel()
        if np.any(t < 0) or np.any(t > self.horizon):
            raise BadParameter("times must lie in [0, horizon]")
        curve = self.curve_
        out = np.empty((t.size, curve.grid.n))
        for row, ti in enumerate(t):
            k = min(int(ti / curve.tau), curve.N - 1)
            s = ti / curve.tau - k
            out[row] = quantile_interpolate(curve.slices[k], curve.slices[k + 1], min(max(s, 0.0), 1.0)).rho
        return out

    def score(self, X=None, y=None):
        check_is_fitted(self, "curve_")
        return -self.action_

"""Numerical checks of the energy estimates on solved curves."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import BadParameter, NotConverged, WrongPenalization
from .functionals import (
    AssumptionClass,
    GPlusW,
    ProblemSpec,
    check_weak_exponent,
    internal_energy,
    log_internal_energy,
)
from .grid import DiscreteCurve
from .solver import optimality_residual

TIME_TOL = 1e-12


class Schedule(str, Enum):
    STRONG = "Strong"
    WEAK = "Weak"


@dataclass(frozen=True)
class FlowInterchangeRow:
    k: int
    m: float
    lhs: float
    rhs: float
    residual: float


@dataclass(frozen=True)
class MoserTrace:
    schedule: Schedule
    m_values: np.ndarray
    window_starts: np.ndarray
    window_ends: np.ndarray
    eps_values: np.ndarray
    L_values: np.ndarray
    sup_estimate: float

    def ratios(self) -> np.ndarray:
        L = self.L_values
        return L[1:] / L[:-1]


def _window_indices(curve: DiscreteCurve, T1: float, T2: float) -> np.ndarray:
    if T1 > T2 or T1 < -TIME_TOL * curve.T or T2 > curve.T * (1 + TIME_TOL):
        raise BadParameter(f"window [{T1}, {T2}] is not inside [0, {curve.T}]")
    t = curve.times
    slack = TIME_TOL * curve.T
    return np.nonzero((t >= T1 - slack) & (t <= T2 + slack))[0]


def lm_stat(curve: DiscreteCurve, m: float, T1: float, T2: float) -> float:
    """``(sum over T1 <= k tau <= T2 of tau U_m(slice k))^(1/m)``; 0 on an empty window."""
    if m <= 1:
        raise BadParameter("the statistic needs m > 1")
    idx = _window_indices(curve, T1, T2)
    if idx.size == 0:
        return 0.0
    logs = np.array([log_internal_energy(curve.slices[k].rho, m, curve.grid.dx) for k in idx])
    logs = logs + math.log(curve.tau)
    top = logs.max()
    if not math.isfinite(top):
        return 0.0
    return float(math.exp((top + math.log(np.exp(logs - top).sum())) / m))


def sup_density(curve: DiscreteCurve, T1: float, T2: float) -> float:
    idx = _window_indices(curve, T1, T2)
    if idx.size == 0:
        raise BadParameter("window contains no slice")
    return float(max(curve.slices[k].rho.max() for k in idx))


def _centered_gradient(values: np.ndarray, dx: float) -> np.ndarray:
    padded = np.concatenate(([values[0]], values, [values[-1]]))
    return (padded[2:] - padded[:-2]) / (2.0 * dx)


def _require_converged(curve: DiscreteCurve, spec: ProblemSpec, ks, slice_tol: float):
    worst = max((optimality_residual(curve, spec, k) for k in ks), default=0.0)
    if worst > slice_tol:
        raise NotConverged(f"largest slice residual {worst:.3e} exceeds {slice_tol:.1e}")


def flow_interchange_report(curve: DiscreteCurve, spec: ProblemSpec, m_list,
                            slice_tol: float = 1e-6) -> list:
    """Dissipation of ``U_m`` along each interior slice against its discrete
    second time difference, one row per ``(k, m)`` in that order."""
    if any(m < 1 for m in m_list):
        raise BadParameter("exponents must be >= 1")
    interior = range(1, spec.N)
    _require_converged(curve, spec, interior, slice_tol)
    dx, tau = spec.grid.dx, spec.tau
    grad_v = _centered_gradient(spec.V.values, dx)
    energies = {m: [internal_energy(s, m) for s in curve.slices] for m in m_list}
    rows = []
    for k in interior:
        r = curve.slices[k].rho
        grad_r = _centered_gradient(r, dx)
        curvature = spec.congestion.fpp(r)
        for m in m_list:
            weight = r ** (m - 1.0)
            lhs = float(np.sum((grad_r**2 * curvature + grad_r * grad_v) * weight) * dx)
            u = energies[m]
            rhs = (u[k - 1] + u[k + 1] - 2.0 * u[k]) / tau**2
            rows.append(FlowInterchangeRow(k, m, lhs, rhs, rhs - lhs))
    return rows


def boundary_flow_check(curve: DiscreteCurve, spec: ProblemSpec, m: float,
                        slice_tol: float | None = None) -> float:
    """``(U_m(N-1) - U_m(N)) / tau + (m - 1) |Lap W|_inf U_m(N)``, expected >= 0."""
    if not isinstance(spec.psi, GPlusW):
        raise WrongPenalization("the terminal estimate needs a GPlusW penalization")
    if m < 1:
        raise BadParameter("exponent must be >= 1")
    if slice_tol is not None:
        _require_converged(curve, spec, range(1, spec.N + 1), slice_tol)
    last = internal_energy(curve.slices[-1], m)
    before = internal_energy(curve.slices[-2], m)
    return (before - last) / spec.tau + (m - 1.0) * spec.psi.W.lap_sup * last


def omega_estimate(curve: DiscreteCurve, m: float) -> float:
    """Smallest ``w2 >= 0`` with ``(u[k+1] + u[k-1] - 2 u[k]) / tau^2 + w2 u[k] >= 0``."""
    if curve.N < 2:
        raise BadParameter("need at least two steps")
    u = np.array([internal_energy(s, m) for s in curve.slices])
    second = (u[2:] + u[:-2] - 2.0 * u[1:-1]) / curve.tau**2
    return float(max(0.0, np.max(-second / u[1:-1])))


def moser_trace(curve: DiscreteCurve, spec: ProblemSpec, schedule: Schedule | str, beta: float,
                eps0: float, T1: float, T2: float | None = None, n_max: int = 6,
                m_start: float | None = None) -> MoserTrace:
    """Tabulate ``L^{m_n}`` over windows that shrink to ``[T1, T2]`` (or ``[T1, T]``).

    Exponents grow like ``m_n = (alpha + 2) beta^n`` for the strong schedule and
    by ``m_{n+1} = beta (m_n + 1 + alpha)`` from ``m_start`` for the weak one;
    window margins are the tails ``eps0 beta^(1-n) / (beta - 1)`` of the
    geometric sequence ``eps_n = eps0 / beta^n``.
    """
    schedule = Schedule(schedule)
    if beta <= 1 or eps0 <= 0 or n_max < 0:
        raise BadParameter("need beta > 1, eps0 > 0 and n_max >= 0")
    alpha = spec.congestion.alpha
    if schedule is Schedule.STRONG:
        if spec.congestion.assumption_class is AssumptionClass.WEAK:
            raise BadParameter("strong schedule requested for a weak congestion function")
        m_values = (alpha + 2.0) * beta ** np.arange(n_max + 1)
    else:
        m0 = m_start if m_start is not None else 2.0
        check_weak_exponent(alpha, m0, beta)
        m_values = [m0]
        for _ in range(n_max):
            m_values.append(beta * (m_values[-1] + 1.0 + alpha))
        m_values = np.array(m_values)
    if np.any(m_values <= 1):
        raise BadParameter("all exponents must exceed 1")
    steps = np.arange(n_max + 1)
    tails = eps0 * beta ** (1.0 - steps) / (beta - 1.0)
    starts = T1 - tails
    ends = (T2 + tails) if T2 is not None else np.full(n_max + 1, curve.T)
    if starts[0] < -TIME_TOL * curve.T or ends[0] > curve.T * (1 + TIME_TOL):
        raise BadParameter("enlarged windows leave [0, T]")
    L = np.array([lm_stat(curve, m, a, b) for m, a, b in zip(m_values, starts, ends)])
    return MoserTrace(schedule, np.asarray(m_values), starts, ends, eps0 / beta**steps, L, float(L.max()))


def violation(residuals) -> float:
    """Size of the most negative entry, or 0 when none is negative."""
    r = np.asarray(residuals, dtype=float)
    return float(max(0.0, -r.min())) if r.size else 0.0


@dataclass(frozen=True)
class FloorEstimate:
    """Discretization floor of a one-sided check measured at two resolutions."""

    n_coarse: int
    n_fine: int
    floor_coarse: float
    floor_fine: float
    roundoff: float

    @property
    def shrink(self) -> float:
        if self.floor_fine <= self.roundoff:
            return math.inf
        return self.floor_coarse / self.floor_fine

    @property
    def order(self) -> float:
        return math.log(self.shrink) / math.log(self.n_fine / self.n_coarse) if math.isfinite(self.shrink) else math.inf

    def shrinks(self, factor: float = 2.0) -> bool:
        """True when the fine floor is negligible or at least ``factor`` times smaller."""
        return self.floor_fine <= self.roundoff or self.shrink >= factor

    def predicted(self, n: int) -> float:
        """Floor extrapolated to resolution ``n`` at the observed order."""
        if self.floor_fine <= self.roundoff:
            return self.roundoff
        p = max(self.order, 0.0)
        return max(self.floor_fine * (self.n_fine / n) ** p, self.roundoff)


def extrapolated_floor(n_coarse: int, v_coarse: float, n_fine: int, v_fine: float,
                       roundoff: float = 1e-10) -> FloorEstimate:
    """Build a ``FloorEstimate`` from violation sizes measured at two grid sizes."""
    if n_fine <= n_coarse:
        raise BadParameter("the fine grid must have more cells")
    return FloorEstimate(n_coarse, n_fine, max(v_coarse, 0.0), max(v_fine, 0.0), roundoff)


def fit_power_law(xs, ys) -> tuple[float, float]:
    """Least-squares fit of ``log y = log c + p log x``; returns ``(p, c)``."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    p, logc = np.polyfit(x, y, 1)
    return float(p), float(math.exp(logc))

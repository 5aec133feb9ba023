"""Energies on grid densities and the discrete action of a curve."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .exceptions import (
    AssumptionViolated,
    BadParameter,
    GridMismatch,
    InitialConditionViolated,
)
from .grid import AtomList, DiscreteCurve, Grid, GridMeasure, check_same_grid
from .transport import DensityCoupling, displacement_interpolate, w2_atoms, w2_squared

SAMPLE_T = np.logspace(-6, 6, 241)


class AssumptionClass(str, Enum):
    STRONG = "Strong"
    STRONG_VARIANT = "StrongVariant"
    WEAK = "Weak"


@dataclass(frozen=True, eq=False)
class CongestionFunction:
    """Convex integrand with its first two derivatives and growth metadata.

    ``alpha``, ``t0`` and ``C_f`` describe the lower bound
    ``f''(t) >= C_f t**alpha``, required for every ``t > 0`` in the strong
    class and for ``t >= t0`` otherwise.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fp: Callable[[np.ndarray], np.ndarray]
    fpp: Callable[[np.ndarray], np.ndarray]
    fp_inf: float
    assumption_class: AssumptionClass
    alpha: float
    t0: float = 0.0
    C_f: float = 1.0

    def self_check(self, t: np.ndarray = SAMPLE_T) -> bool:
        """Sampled convexity plus the declared lower bound on ``f''``."""
        t = np.asarray(t, dtype=float)
        second = self.fpp(t)
        if np.any(second < 0):
            return False
        if self.assumption_class is AssumptionClass.WEAK:
            if self.alpha >= -1:
                return False
        elif self.alpha < -1:
            return False
        mask = t > 0 if self.assumption_class is AssumptionClass.STRONG else t >= self.t0
        bound = self.C_f * t[mask] ** self.alpha
        return bool(np.all(second[mask] >= bound * (1 - 1e-12)))

    def is_superlinear(self) -> bool:
        slopes = self.fp(np.array([1e2, 1e4, 1e6]))
        return bool(np.all(np.diff(slopes) > 1.0))


def _power_energy(m: float):
    if m == 1:
        f = lambda t: np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0) + 1.0
        fp = lambda t: np.log(t) + 1.0
        fpp = lambda t: 1.0 / t
    else:
        c = 1.0 / (m * (m - 1.0))
        f = lambda t: c * np.power(t, m)
        fp = lambda t: np.power(t, m - 1.0) / (m - 1.0)
        fpp = lambda t: np.power(t, m - 2.0)
    return f, fp, fpp


def power_congestion(m: float) -> CongestionFunction:
    """``t**m / (m (m - 1))`` (entropy ``t ln t + 1`` when ``m == 1``)."""
    if m < 1:
        raise BadParameter(f"exponent must be >= 1, got {m!r}")
    f, fp, fpp = _power_energy(m)
    return CongestionFunction(f"um:{m:g}", f, fp, fpp, math.inf, AssumptionClass.STRONG, m - 2.0)


def sqrt_one_plus_square() -> CongestionFunction:
    """``sqrt(1 + t^2)``: bounded slope, second derivative decays like ``t^-3``."""
    return CongestionFunction(
        "sqrt1p2",
        lambda t: np.sqrt(1.0 + t * t),
        lambda t: t / np.sqrt(1.0 + t * t),
        lambda t: (1.0 + t * t) ** -1.5,
        1.0,
        AssumptionClass.WEAK,
        -3.0,
        t0=1.0,
        C_f=2.0 ** -1.5,
    )


def sqrt_one_plus_quartic() -> CongestionFunction:
    """``sqrt(1 + t^4)``: ``f''`` decreases to 2 from above for ``t >= 1``."""
    return CongestionFunction(
        "sqrt1p4",
        lambda t: np.sqrt(1.0 + t**4),
        lambda t: 2.0 * t**3 / np.sqrt(1.0 + t**4),
        lambda t: (6.0 * t**2 + 2.0 * t**6) / (1.0 + t**4) ** 1.5,
        math.inf,
        AssumptionClass.STRONG_VARIANT,
        0.0,
        t0=1.0,
        C_f=2.0,
    )


def hinge_square() -> CongestionFunction:
    """``max(t - 1, 0)^2``."""
    return CongestionFunction(
        "hinge2",
        lambda t: np.maximum(t - 1.0, 0.0) ** 2,
        lambda t: 2.0 * np.maximum(t - 1.0, 0.0),
        lambda t: np.where(t >= 1.0, 2.0, 0.0),
        math.inf,
        AssumptionClass.STRONG_VARIANT,
        0.0,
        t0=1.0,
        C_f=2.0,
    )


def congestion_from_name(name: str) -> CongestionFunction:
    if name.startswith("um:"):
        try:
            m = float(name[3:])
        except ValueError as exc:
            raise BadParameter(f"bad exponent in {name!r}") from exc
        return power_congestion(m)
    table = {"sqrt1p2": sqrt_one_plus_square, "sqrt1p4": sqrt_one_plus_quartic, "hinge2": hinge_square}
    if name not in table:
        raise BadParameter(f"unknown congestion function {name!r}")
    return table[name]()


@dataclass(frozen=True, eq=False)
class Potential:
    """Potential sampled at cell centers."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise BadParameter("potential must have one value per cell")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def grad_sup(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))) / self.grid.dx)

    @property
    def lap_sup(self) -> float:
        v = self.values
        if v.size < 3:
            return 0.0
        return float(np.max(np.abs(v[2:] - 2 * v[1:-1] + v[:-2])) / self.grid.dx**2)

    @property
    def boundary_flag(self) -> bool:
        v = self.values
        tol = 1e-12 * (1.0 + np.max(np.abs(v)))
        return bool(v[0] - v[1] >= -tol and v[-1] - v[-2] >= -tol)


def zero_potential(grid: Grid) -> Potential:
    return Potential(grid, np.zeros(grid.n))


def quadratic_well(grid: Grid, scale: float = 1.0, center: float = 0.5) -> Potential:
    return Potential(grid, scale * (grid.centers - center) ** 2)


def potential_from_name(name: str, grid: Grid, scale: float = 1.0) -> Potential:
    if name == "zero":
        return zero_potential(grid)
    if name == "quadratic_well":
        return quadratic_well(grid, scale)
    raise BadParameter(f"unknown potential {name!r}")


@dataclass(frozen=True, eq=False)
class PrescribedTarget:
    target: GridMeasure


@dataclass(frozen=True, eq=False)
class GPlusW:
    g: CongestionFunction
    W: Potential

    def __post_init__(self):
        if not self.g.is_superlinear():
            raise AssumptionViolated(f"terminal integrand {self.g.name} is not superlinear")
        if not self.W.boundary_flag:
            raise AssumptionViolated("terminal potential must have nonnegative outward slopes")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    grid: Grid
    T: float
    N: int
    lam: float
    rho0: GridMeasure
    congestion: CongestionFunction
    V: Potential
    psi: PrescribedTarget | GPlusW
    lambda_N: float = field(init=False)

    def __post_init__(self):
        if self.T <= 0 or int(self.N) != self.N or self.N < 1:
            raise BadParameter("need T > 0 and an integer N >= 1")
        if self.lam < 0:
            raise BadParameter("entropic weight must be nonnegative")
        if self.rho0.grid != self.grid or self.V.grid != self.grid:
            raise GridMismatch("initial density and potential must share the problem grid")
        if isinstance(self.psi, PrescribedTarget):
            if self.psi.target.grid != self.grid:
                raise GridMismatch("target lives on a different grid")
            lam_n = 0.0
        elif isinstance(self.psi, GPlusW):
            if self.psi.W.grid != self.grid:
                raise GridMismatch("terminal potential lives on a different grid")
            lam_n = self.lam
        else:
            raise BadParameter("unknown final penalization")
        object.__setattr__(self, "lambda_N", lam_n)

    @property
    def tau(self) -> float:
        return self.T / self.N

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.grid, self.T, self.N, lam, self.rho0, self.congestion, self.V, self.psi)


def _entropy_density(r: np.ndarray) -> np.ndarray:
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, r * np.log(safe), 0.0) + 1.0


def internal_energy(rho: GridMeasure, m: float) -> float:
    """``sum u_m(rho_i) dx`` with ``u_1 = t ln t + 1`` and ``u_m = t^m / (m (m-1))``."""
    if m < 1:
        raise BadParameter(f"exponent must be >= 1, got {m!r}")
    r = rho.rho
    if m == 1:
        vals = _entropy_density(r)
    else:
        vals = r**m / (m * (m - 1.0))
    return float(vals.sum() * rho.grid.dx)


def log_internal_energy(rho: np.ndarray, m: float, dx: float) -> float:
    """``log U_m`` for ``m > 1`` without overflow for large exponents."""
    pos = rho[rho > 0]
    if pos.size == 0:
        return -math.inf
    logs = m * np.log(pos)
    top = logs.max()
    return float(top + math.log(np.exp(logs - top).sum()) + math.log(dx) - math.log(m * (m - 1.0)))


def congestion_energy(rho: GridMeasure, f: CongestionFunction) -> float:
    return float(np.sum(f.f(rho.rho)) * rho.grid.dx)


def potential_energy(rho: GridMeasure, V: Potential) -> float:
    return float(np.dot(rho.rho, V.values) * rho.grid.dx)


def final_energy(rhoT: GridMeasure, psi, lambda_N: float) -> float:
    if isinstance(psi, PrescribedTarget):
        if rhoT.grid == psi.target.grid and np.max(np.abs(rhoT.rho - psi.target.rho)) <= 1e-9:
            return 0.0
        return math.inf
    out = congestion_energy(rhoT, psi.g) + potential_energy(rhoT, psi.W)
    if lambda_N:
        out += lambda_N * internal_energy(rhoT, 1)
    return out


def running_energy(rho: GridMeasure, spec: ProblemSpec) -> float:
    out = congestion_energy(rho, spec.congestion) + potential_energy(rho, spec.V)
    if spec.lam:
        out += spec.lam * internal_energy(rho, 1)
    return out


def _check_curve(curve: DiscreteCurve, spec: ProblemSpec):
    if curve.grid != spec.grid or curve.N != spec.N or abs(curve.T - spec.T) > 1e-12 * spec.T:
        raise GridMismatch("curve and problem disagree on grid, N or T")
    if np.max(np.abs(curve.slices[0].rho - spec.rho0.rho)) > 1e-9:
        raise InitialConditionViolated("first slice differs from the initial density")


def kinetic_terms(curve: DiscreteCurve, transport: str = "density") -> np.ndarray:
    """Squared W2 between consecutive slices, in the requested view."""
    out = np.empty(curve.N)
    for k in range(1, curve.N + 1):
        a, b = curve.slices[k - 1], curve.slices[k]
        if transport == "density":
            out[k - 1] = DensityCoupling(a.cdf_nodes(), b.cdf_nodes(), curve.grid.dx).cost()
        elif transport == "atoms":
            out[k - 1] = w2_squared(a, b)
        else:
            raise BadParameter(f"unknown transport view {transport!r}")
    return out


def discrete_action(curve: DiscreteCurve, spec: ProblemSpec, transport: str = "density") -> float:
    """Kinetic sum over steps, running energy on interior slices, terminal cost.

    ``transport`` selects the reading of slices used in the kinetic terms; the
    solver minimizes the ``"density"`` version.
    """
    _check_curve(curve, spec)
    tau = spec.tau
    kinetic = kinetic_terms(curve, transport).sum() / (2.0 * tau)
    running = sum(running_energy(curve.slices[k], spec) for k in range(1, spec.N))
    return float(kinetic + tau * running + final_energy(curve.slices[-1], spec.psi, spec.lambda_N))


def geodesic_kinetic_energy(curve: DiscreteCurve, substeps: int = 8) -> float:
    """Kinetic action of the piecewise-geodesic interpolation of ``curve``.

    Each step is refined into ``substeps`` pieces of the atomic geodesic and the
    metric-derivative integral is taken as the sum of squared distances between
    consecutive refined points divided by twice their time gap.
    """
    tau = curve.tau
    dt = tau / substeps
    total = 0.0
    for k in range(1, curve.N + 1):
        a, b = curve.slices[k - 1], curve.slices[k]
        pts: list[AtomList] = [displacement_interpolate(a, b, s / substeps) for s in range(substeps + 1)]
        for p, q in zip(pts[:-1], pts[1:]):
            total += w2_atoms(p, q) ** 2 / (2.0 * dt)
    return total


def check_weak_exponent(alpha: float, m0: float, beta: float):
    """Raise unless ``beta / (beta - 1) * m0 > |alpha + 1|``."""
    if beta <= 1:
        raise BadParameter("beta must exceed 1")
    if not beta / (beta - 1.0) * m0 > abs(alpha + 1.0):
        raise AssumptionViolated(
            f"beta={beta:g}, m0={m0:g} fail beta/(beta-1)*m0 > |alpha+1| = {abs(alpha + 1.0):g}"
        )

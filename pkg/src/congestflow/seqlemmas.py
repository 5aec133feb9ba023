"""Comparison, Harnack and reverse Jensen bounds for almost-convex sequences.

A positive sequence ``u_0, ..., u_N`` with step ``tau`` is almost-convex at
frequency ``omega`` when ``(u[k+1] + u[k-1] - 2 u[k]) / tau^2 + omega^2 u[k] >= 0``
at every interior index. The bounds below compare such sequences with the
cosine family ``v_k = A cos(2 omega k tau + delta)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .exceptions import BadParameter, NoFit, OutOfRange, PreconditionViolated, TooShort

COMPARISON_TOL = 1e-10
TIME_TOL = 1e-12

HARNACK_INTERIOR = 1.0 / math.cos(3.0 * math.pi / 8.0)
"""Interior Harnack constant ``1 / cos(3 pi / 8)``."""

HARNACK_NEUMANN = 1.3652
"""Upper bound (rounded up) of ``max v / min v`` for Neumann-fitted cosines over two
adjacent windows of length ``min(pi / (32 omega), pi / (32 b))``; recomputed by
``neumann_harnack_bound``."""

REVERSE_JENSEN_INTERIOR = 8.0 / math.pi * HARNACK_INTERIOR
"""Piece count ``M <= (8 / pi)(omega + 1)(T2 - T1 + 1)`` times the interior Harnack constant."""

BOUNDARY_CONTROL = HARNACK_NEUMANN
REVERSE_JENSEN_NEUMANN = REVERSE_JENSEN_INTERIOR + HARNACK_NEUMANN


class FitMode(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class HarnackMode(str, Enum):
    INTERIOR = "interior"
    NEUMANN = "neumann"


class JensenMode(str, Enum):
    INTERIOR = "interior"
    NEUMANN = "neumann"
    INITIAL = "initial"


@dataclass(frozen=True, eq=False)
class SequenceWitness:
    """Positive sequence with its step, frequency and optional end slope bound."""

    u: np.ndarray
    tau: float
    omega: float
    b: float | None = None

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 1 or u.size < 2:
            raise TooShort("a witness needs at least two values")
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise BadParameter("witness values must be finite and strictly positive")
        if not self.tau > 0 or not self.omega >= 0:
            raise BadParameter("need tau > 0 and omega >= 0")
        if self.b is not None and not self.b >= 0:
            raise BadParameter("end slope bound must be >= 0")
        u.flags.writeable = False
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.u.size - 1

    @property
    def T(self) -> float:
        return self.N * self.tau

    def is_almost_convex(self, tol: float = 0.0) -> bool:
        return second_diff_residual(self) >= -tol

    def end_slope_excess(self) -> float:
        """``(u_N - u_{N-1}) / tau - b u_N``; nonpositive when the end condition holds."""
        if self.b is None:
            raise PreconditionViolated("witness has no end slope bound")
        return (self.u[-1] - self.u[-2]) / self.tau - self.b * self.u[-1]


@dataclass(frozen=True)
class CosineFit:
    """``v_k = A cos(2 omega k tau + delta)``."""

    A: float
    delta: float
    omega: float
    tau: float

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return self.A * np.cos(2.0 * self.omega * k * self.tau + self.delta)

    def residual_factor(self) -> float:
        """``v''/v + omega^2`` for the discrete second difference, the same at every index."""
        return cosine_residual_factor(self.omega, self.tau)


def cosine_residual_factor(omega: float, tau: float) -> float:
    return 2.0 * (math.cos(2.0 * omega * tau) - 1.0) / tau**2 + omega**2


_TAU0_ROOT = brentq(lambda z: (1.0 - math.cos(z)) / z**2 - 0.25, 1.0, 3.0, xtol=1e-15)


def tau0(omega: float) -> float:
    """Largest step with ``cosine_residual_factor(omega, tau) <= -omega^2``."""
    if omega < 0:
        raise BadParameter("omega must be >= 0")
    return math.inf if omega == 0 else _TAU0_ROOT / (2.0 * omega)


def second_diff_residual(w: SequenceWitness) -> float:
    """Minimum over interior indices of ``(u[k+1] + u[k-1] - 2 u[k]) / tau^2 + omega^2 u[k]``."""
    if w.N < 2:
        raise TooShort("need N >= 2")
    u = w.u
    r = (u[2:] + u[:-2] - 2.0 * u[1:-1]) / w.tau**2 + w.omega**2 * u[1:-1]
    return float(r.min())


def _check_step(omega: float, tau: float):
    if not omega > 0 or not tau > 0:
        raise BadParameter("need omega > 0 and tau > 0")
    if tau > tau0(omega) * (1 + TIME_TOL):
        raise OutOfRange(f"tau = {tau} exceeds tau0({omega}) = {tau0(omega)}")


def _fit_from_pq(P: float, Q: float, shift: float, omega: float, tau: float) -> CosineFit:
    # v_k = P cos(s (k - k_ref)) + Q sin(s (k - k_ref)) with shift = s k_ref
    A = math.hypot(P, Q)
    if not A > 0 or not math.isfinite(A):
        raise NoFit("degenerate cosine fit")
    delta = math.atan2(-Q, P) - shift
    return CosineFit(A, delta, omega, tau)


def cosine_fit_dirichlet(k1: int, a1: float, k2: int, a2: float, omega: float, tau: float) -> CosineFit:
    """Unique cosine through ``(k1, a1)`` and ``(k2, a2)``."""
    _check_step(omega, tau)
    if k1 == k2 or a1 <= 0 or a2 <= 0:
        raise BadParameter("need distinct indices and positive values")
    if abs(k2 - k1) * tau * omega >= math.pi / 8:
        raise OutOfRange("window too wide for a unique fit")
    s = 2.0 * omega * tau
    d = s * (k2 - k1)
    # P = a1 at k1; a2 = P cos d + Q sin d
    P = a1
    Q = (a2 - a1 * math.cos(d)) / math.sin(d)
    return _fit_from_pq(P, Q, s * k1, omega, tau)


def cosine_fit_neumann(k1: int, a: float, N: int, b: float, omega: float, tau: float) -> CosineFit:
    """Unique cosine with ``v_{k1} = a`` and ``(v_N - v_{N-1}) / tau = b v_N``."""
    _check_step(omega, tau)
    if a <= 0 or b < 0:
        raise BadParameter("need a > 0 and b >= 0")
    if k1 > N:
        raise BadParameter("k1 must not exceed N")
    limit = min(math.pi / (8 * omega), math.pi / (8 * b) if b > 0 else math.inf)
    if abs(N - k1) * tau >= limit:
        raise OutOfRange("window too wide for a unique fit")
    s = 2.0 * omega * tau
    # angle at N: tan(theta_N) = (1 - cos s - b tau) / sin s, so v_k = B cos(s (k - N) + theta_N)
    theta_n = math.atan2(1.0 - math.cos(s) - b * tau, math.sin(s))
    value = math.cos(s * (k1 - N) + theta_n)
    if not value > 0:
        raise NoFit("fit is not positive at k1")
    return CosineFit(a / value, theta_n - s * N, omega, tau)


def cosine_fit(mode, *args, omega: float, tau: float) -> CosineFit:
    """Dispatch on ``mode``: ``("dirichlet", k1, a1, k2, a2)`` or ``("neumann", k1, a, N, b)``."""
    mode = FitMode(mode)
    if mode is FitMode.DIRICHLET:
        return cosine_fit_dirichlet(*args, omega=omega, tau=tau)
    return cosine_fit_neumann(*args, omega=omega, tau=tau)


def _positive_run(v: np.ndarray, lo: int, hi: int) -> tuple[int, int]:
    """Extend ``[lo, hi]`` to the maximal index range with ``v >= 0``."""
    a = lo
    while a > 0 and v[a - 1] >= 0:
        a -= 1
    b = hi
    while b < v.size - 1 and v[b + 1] >= 0:
        b += 1
    return a, b


def comparison_check(w: SequenceWitness, fit: CosineFit, k1: int, k2_or_N: int, mode) -> list:
    """Indices where the comparison sandwich between ``w`` and ``fit`` fails.

    ``u <= v`` is required between ``k1`` and ``k2`` (or ``N``) and ``u >= v``
    on the adjacent index ranges where ``v`` stays nonnegative.
    """
    mode = FitMode(mode)
    if w.N < 2:
        raise TooShort("need N >= 2")
    if second_diff_residual(w) < 0:
        raise PreconditionViolated("witness is not almost-convex")
    k2 = k2_or_N
    if mode is FitMode.NEUMANN:
        if k2 != w.N:
            raise PreconditionViolated("Neumann comparison runs up to the last index")
        if w.b is None or w.end_slope_excess() > COMPARISON_TOL * max(1.0, w.u[-1]):
            raise PreconditionViolated("end slope condition fails")
        limit = min(math.pi / (8 * w.omega), math.pi / (8 * w.b) if w.b > 0 else math.inf)
        if abs(w.N - k1) * w.tau >= limit:
            raise PreconditionViolated("window too wide")
    elif abs(k2 - k1) * w.tau * w.omega >= math.pi / 8 or not 0 <= k1 < k2 <= w.N:
        raise PreconditionViolated("invalid Dirichlet window")
    k = np.arange(w.N + 1)
    v = fit(k)
    u = w.u
    scale = np.maximum(1.0, np.abs(v))
    bad = set(np.nonzero(u[k1:k2 + 1] > v[k1:k2 + 1] + COMPARISON_TOL * scale[k1:k2 + 1])[0] + k1)
    k0, k3 = _positive_run(v, k1, k2)
    outer = list(range(k0, k1 + 1))
    if mode is FitMode.DIRICHLET:
        outer += list(range(k2, k3 + 1))
    outer = np.array(outer, dtype=int)
    bad |= set(outer[u[outer] < v[outer] - COMPARISON_TOL * scale[outer]])
    return sorted(int(i) for i in bad)


@dataclass(frozen=True)
class HarnackResult:
    sup_inner: float
    inf_outer: float
    ratio: float
    constant: float


def harnack_ratio(w: SequenceWitness, k0: int, k1: int, k2: int, k3: int, mode) -> HarnackResult:
    """Sup of ``u`` on the inner window over the best inf on the side window(s).

    Interior mode uses ``[k1, k2]`` against ``[k0, k1]`` and ``[k2, k3]``;
    Neumann mode uses ``[k1, N]`` against ``[k0, k1]`` (``k2`` and ``k3``
    must equal ``N``).
    """
    mode = HarnackMode(mode)
    u, tau, omega = w.u, w.tau, w.omega
    if not 0 <= k0 <= k1 <= k2 <= k3 <= w.N:
        raise PreconditionViolated("indices must satisfy 0 <= k0 <= k1 <= k2 <= k3 <= N")
    if mode is HarnackMode.INTERIOR:
        bound = math.pi / 8
        if k1 == k2 or max(k2 - k1, k1 - k0, k3 - k2) * tau * omega >= bound:
            raise PreconditionViolated("interior windows violate the index conditions")
        sup_inner = u[k1:k2 + 1].max()
        inf_outer = max(u[k0:k1 + 1].min(), u[k2:k3 + 1].min())
        const = HARNACK_INTERIOR
    else:
        if w.b is None:
            raise PreconditionViolated("Neumann mode needs an end slope bound")
        if k2 != w.N or k3 != w.N:
            raise PreconditionViolated("Neumann mode needs k2 = k3 = N")
        limit = _neumann_window(omega, w.b)
        if max(w.N - k1, k1 - k0) * tau > limit * (1 + TIME_TOL):
            raise PreconditionViolated("Neumann windows exceed min(pi/(32 omega), pi/(32 b))")
        sup_inner = u[k1:].max()
        inf_outer = u[k0:k1 + 1].min()
        const = HARNACK_NEUMANN
    return HarnackResult(float(sup_inner), float(inf_outer), float(sup_inner / inf_outer), const)


def _neumann_window(omega: float, b: float) -> float:
    cands = [math.pi / (32 * x) for x in (omega, b) if x > 0]
    return min(cands) if cands else math.inf


def neumann_harnack_bound(n_step: int = 400, n_slope: int = 201) -> float:
    """Largest ``max v / min v`` over Neumann-fitted cosines on two adjacent windows.

    Scans step sizes ``s = 2 omega tau`` and slopes ``b tau``; the supremum sits
    near ``b = omega`` with small steps.
    """
    best = 1.0
    for s in np.logspace(-6, math.log10(_TAU0_ROOT), n_step):
        for q in np.concatenate(([0.0], np.linspace(0.05, 4.0, n_slope))):
            bt = q * s
            J = int(math.floor(min(math.pi / (16 * s), math.pi / (32 * bt) if bt > 0 else math.inf) + 1e-12))
            theta = math.atan2(1.0 - math.cos(s) - bt, math.sin(s))
            v = np.cos(theta - s * np.arange(2 * J + 1))
            best = max(best, v[:J + 1].max() / v[J:].min())
    return float(best)


def _window_sum(values: np.ndarray, tau: float, lo: float, hi: float) -> tuple[float, np.ndarray]:
    t = np.arange(values.size) * tau
    slack = TIME_TOL * max(1.0, t[-1])
    mask = (t >= lo - slack) & (t <= hi + slack)
    return float(tau * values[mask].sum()), mask


@dataclass(frozen=True)
class JensenResult:
    lhs: float
    rhs: float
    constant: float
    boundary_lhs: float | None = None
    boundary_rhs: float | None = None

    @property
    def holds(self) -> bool:
        ok = self.lhs <= self.rhs
        if self.boundary_lhs is not None:
            ok = ok and self.boundary_lhs <= self.boundary_rhs
        return ok

    @property
    def tightness(self) -> float:
        r = self.lhs / self.rhs if self.rhs > 0 else math.inf
        if self.boundary_lhs is not None and self.boundary_rhs > 0:
            r = max(r, self.boundary_lhs / self.boundary_rhs)
        return r


def _jensen_pair(w: SequenceWitness, beta: float, T1: float, T2: float, eta: float,
                 hi_sum: float, const: float) -> tuple[float, float]:
    mass, _ = _window_sum(w.u, w.tau, T1, T2)
    lhs = mass ** (1.0 / beta)
    root_sum, _ = _window_sum(w.u ** (1.0 / beta), w.tau, T1 - eta, hi_sum)
    rhs = const * (w.omega + 1.0) * (T2 - T1 + 1.0) ** (1.0 + 1.0 / beta) / eta * root_sum
    return lhs, rhs


def reverse_jensen_check(w: SequenceWitness, beta: float, window, eta: float, mode,
                         constant: float | None = None) -> JensenResult:
    """Evaluate both sides of a reverse Jensen bound on ``w``.

    ``interior``: ``(sum_{T1..T2} tau u)^(1/beta)`` against
    ``C (omega + 1)(T2 - T1 + 1)^(1 + 1/beta) / eta * sum_{T1-eta..T2+eta} tau u^(1/beta)``.
    ``neumann``: the same with the upper limit pinned to ``T = N tau`` plus the
    end control ``u_N <= (C1 / eta) sum_{T-eta..T} tau u``.
    ``initial``: ``max u`` against the maximum of the Neumann fit through ``u_0``.
    """
    mode = JensenMode(mode)
    if not beta > 1 or not eta > 0:
        raise PreconditionViolated("need beta > 1 and eta > 0")
    if w.N < 2 or second_diff_residual(w) < 0:
        raise PreconditionViolated("witness is not almost-convex")
    if w.omega > 0 and w.tau > tau0(w.omega):
        raise PreconditionViolated("step exceeds tau0")
    if w.tau > 1:
        raise PreconditionViolated("step must be at most 1")
    T1, T2 = window
    T = w.T
    slack = TIME_TOL * max(1.0, T)
    if mode is JensenMode.INTERIOR:
        if w.omega > 0 and eta >= math.pi / (8 * w.omega):
            raise PreconditionViolated("eta must be below pi / (8 omega)")
        if T1 > T2 or T1 - eta < -slack or T2 + eta > T + slack:
            raise PreconditionViolated("enlarged window leaves [0, N tau]")
        c = REVERSE_JENSEN_INTERIOR if constant is None else constant
        lhs, rhs = _jensen_pair(w, beta, T1, T2, eta, T2 + eta, c)
        return JensenResult(lhs, rhs, c)
    b = w.b
    if b is None or w.end_slope_excess() > COMPARISON_TOL * max(1.0, w.u[-1]):
        raise PreconditionViolated("end slope condition fails")
    limit = _neumann_window(w.omega, b)
    if mode is JensenMode.NEUMANN:
        if eta > limit * (1 + TIME_TOL):
            raise PreconditionViolated("eta exceeds min(pi/(32 omega), pi/(32 b))")
        if T1 >= T or T1 - eta < -slack:
            raise PreconditionViolated("window must satisfy eta <= T1 < N tau")
        c = REVERSE_JENSEN_NEUMANN if constant is None else constant
        lhs, rhs = _jensen_pair(w, beta, T1, T, eta, T, c)
        end_sum, _ = _window_sum(w.u, w.tau, T - eta, T)
        return JensenResult(lhs, rhs, c, float(w.u[-1]), BOUNDARY_CONTROL / eta * end_sum)
    if T > limit * (1 + TIME_TOL):
        raise PreconditionViolated("horizon exceeds min(pi/(32 omega), pi/(32 b))")
    if w.omega == 0:
        # v is affine with slope b v_N through u_0; its maximum sits at N
        cap = w.u[0] / max(1.0 - b * T, TIME_TOL)
    else:
        fit = cosine_fit_neumann(0, float(w.u[0]), w.N, b, w.omega, w.tau)
        cap = float(fit(np.arange(w.N + 1)).max())
    return JensenResult(float(w.u.max()), cap, cap)


# --- witness generation -------------------------------------------------------

@dataclass
class WitnessFamily:
    """Seeded generator of almost-convex positive sequences.

    Each sample is a positive combination of a constant, a cosh bump, an
    affine ramp and a clipped cosine slightly slower than the critical
    frequency, so its residual is near zero on the positive arc.
    """

    N: int
    tau: float
    omega: float
    b: float | None = None
    near_extremal: float = 0.7
    rejected: list = field(default_factory=list)

    def sample(self, rng: np.random.Generator) -> SequenceWitness:
        for _ in range(100):
            u = self._draw(rng)
            w = SequenceWitness(u, self.tau, self.omega, self.b)
            if self.b is not None:
                w = self._fix_end(w)
            if second_diff_residual(w) >= 0:
                return w
            self.rejected.append(w)
        raise NoFit("witness generator kept producing rejected samples")

    def _draw(self, rng) -> np.ndarray:
        t = np.arange(self.N + 1) * self.tau
        T = t[-1]
        u = np.full(t.size, rng.uniform(1e-3, 1.0) * (rng.random() > self.near_extremal))
        u += 1e-6
        if rng.random() < 0.5:
            kappa = rng.uniform(0.1, 3.0) / max(T, 1e-12)
            u += rng.uniform(0, 1) * np.cosh(kappa * (t - rng.uniform(0, T)))
        if rng.random() < 0.5:
            slope = rng.uniform(-1, 1)
            ramp = slope * (t - (T if slope > 0 else 0.0))
            u += rng.uniform(0, 1) * (ramp - ramp.min())
        if self.omega > 0:
            wmax = 2.0 / self.tau * math.asin(min(1.0, self.omega * self.tau / 2.0))
            freq = wmax * (1.0 - 10 ** rng.uniform(-6, -1))
            amp = rng.uniform(0.5, 5.0)
            u += np.maximum(amp * np.cos(freq * t + rng.uniform(-math.pi, math.pi)), 0.0)
        return u

    def _fix_end(self, w: SequenceWitness) -> SequenceWitness:
        excess = w.end_slope_excess()
        if excess <= 0:
            return w
        t = np.arange(w.N + 1) * w.tau
        kappa = 1.0 / max(w.T, w.tau)
        bump = np.cosh(kappa * (t - w.T))
        bump_excess = (bump[-1] - bump[-2]) / w.tau - w.b * bump[-1]
        lam = 1.01 * excess / -bump_excess
        return SequenceWitness(w.u + lam * bump, w.tau, w.omega, w.b)


def clipped_cosine_witness(N: int, tau: float, omega: float, amplitude: float, phase: float,
                           floor: float = 1e-9, slack: float = 1e-6) -> SequenceWitness:
    """Near-extremal witness ``max(A cos(omega' t + phase), 0) + floor``."""
    wmax = 2.0 / tau * math.asin(min(1.0, omega * tau / 2.0))
    t = np.arange(N + 1) * tau
    u = np.maximum(amplitude * np.cos(wmax * (1.0 - slack) * t + phase), 0.0) + floor
    return SequenceWitness(u, tau, omega)


# --- text serialization ---------------------------------------------------------

def format_witness(w: SequenceWitness) -> str:
    b = "nan" if w.b is None else repr(float(w.b))
    buf = io.StringIO()
    buf.write(f"{w.tau!r} {w.omega!r} {b} {w.N}\n")
    for x in w.u:
        buf.write(f"{x:.17g}\n")
    return buf.getvalue()


def parse_witness(text: str) -> SequenceWitness:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise BadParameter("empty witness text")
    head = lines[0].split()
    if len(head) != 4:
        raise BadParameter("header must read 'tau omega b N'")
    tau, omega, b = (float(x) for x in head[:3])
    N = int(head[3])
    u = np.array([float(x) for x in lines[1:]])
    if u.size != N + 1:
        raise BadParameter(f"expected {N + 1} values, found {u.size}")
    return SequenceWitness(u, tau, omega, None if math.isnan(b) else b)


def write_witness(path, w: SequenceWitness):
    Path(path).write_text(format_witness(w))


def read_witness(path) -> SequenceWitness:
    return parse_witness(Path(path).read_text())


# --- laboratory runs --------------------------------------------------------------

@dataclass(frozen=True)
class LabRow:
    lemma: str
    seed: int
    lhs: float
    rhs: float
    passed: bool
    witness: SequenceWitness

    def replay(self) -> str:
        return format_witness(self.witness)


def _lab_dirichlet(rng, seed):
    omega = rng.uniform(0.5, 4.0)
    tau = min(0.02, tau0(omega) / 4)
    N = int(rng.integers(40, 200))
    w = WitnessFamily(N, tau, omega).sample(rng)
    span = max(1, int(math.pi / (8 * omega * tau) - 1))
    k1 = int(rng.integers(1, N - 1))
    k2 = min(N, k1 + int(rng.integers(1, span + 1)))
    if k2 == k1:
        k1 -= 1
    fit = cosine_fit_dirichlet(k1, w.u[k1], k2, w.u[k2], omega, tau)
    bad = comparison_check(w, fit, k1, k2, FitMode.DIRICHLET)
    return LabRow("comparison_dirichlet", seed, float(len(bad)), 0.0, not bad, w)


def _lab_neumann(rng, seed):
    omega = rng.uniform(0.5, 4.0)
    b = float(rng.choice([0.0, rng.uniform(0.1, 8.0)]))
    tau = min(0.01, tau0(omega) / 4)
    N = int(rng.integers(40, 200))
    w = WitnessFamily(N, tau, omega, b).sample(rng)
    limit = min(math.pi / (8 * omega), math.pi / (8 * b) if b > 0 else math.inf)
    span = max(1, int(limit / tau) - 1)
    k1 = max(0, N - int(rng.integers(1, span + 1)))
    fit = cosine_fit_neumann(k1, w.u[k1], N, b, omega, tau)
    bad = comparison_check(w, fit, k1, N, FitMode.NEUMANN)
    return LabRow("comparison_neumann", seed, float(len(bad)), 0.0, not bad, w)


def _lab_harnack(rng, seed):
    omega = rng.uniform(0.5, 4.0)
    tau = min(0.01, tau0(omega) / 4)
    span = int(math.ceil(math.pi / (8 * omega * tau))) - 1
    N = 3 * span + int(rng.integers(0, 20))
    w = WitnessFamily(N, tau, omega).sample(rng)
    k1 = int(rng.integers(0, N - 2 * span + 1)) + span
    k2 = min(N, k1 + int(rng.integers(1, span + 1)))
    k0, k3 = max(0, k1 - span), min(N, k2 + span)
    res = harnack_ratio(w, k0, k1, k2, k3, HarnackMode.INTERIOR)
    rhs = HARNACK_INTERIOR * (1 + 1e-9)
    return LabRow("harnack_interior", seed, res.ratio, rhs, res.ratio <= rhs, w)


def _lab_jensen_interior(rng, seed, beta):
    omega = rng.uniform(0.5, 4.0)
    tau = min(0.01, tau0(omega) / 4)
    eta = rng.uniform(0.1, 0.99) * math.pi / (8 * omega)
    T1 = eta + rng.uniform(0, 0.5)
    T2 = T1 + rng.uniform(0, 2.0)
    N = int(math.ceil((T2 + eta) / tau)) + int(rng.integers(0, 10))
    w = WitnessFamily(N, tau, omega).sample(rng)
    res = reverse_jensen_check(w, beta, (T1, T2), eta, JensenMode.INTERIOR)
    return LabRow("jensen_interior", seed, res.lhs, res.rhs, res.holds, w)


def _lab_jensen_neumann(rng, seed, beta):
    omega = rng.uniform(0.5, 4.0)
    b = float(rng.choice([0.0, rng.uniform(0.1, 8.0)]))
    tau = min(0.005, tau0(omega) / 4)
    eta = rng.uniform(0.1, 1.0) * _neumann_window(omega, b)
    T1 = eta + rng.uniform(0, 0.3)
    N = int(math.ceil((T1 + rng.uniform(tau, 2.0)) / tau))
    w = WitnessFamily(N, tau, omega, b).sample(rng)
    res = reverse_jensen_check(w, beta, (T1, w.T), eta, JensenMode.NEUMANN)
    return LabRow("jensen_neumann", seed, max(res.lhs / res.rhs, res.boundary_lhs / res.boundary_rhs),
                  1.0, res.holds, w)


def _lab_jensen_initial(rng, seed, beta):
    omega = rng.uniform(0.5, 4.0)
    b = float(rng.choice([0.0, rng.uniform(0.1, 8.0)]))
    T = rng.uniform(0.2, 1.0) * _neumann_window(omega, b)
    N = int(rng.integers(20, 200))
    tau = T / N
    w = WitnessFamily(N, tau, omega, b).sample(rng)
    res = reverse_jensen_check(w, beta, (0.0, w.T), 1.0, JensenMode.INITIAL)
    return LabRow("jensen_initial", seed, res.lhs, res.rhs, res.holds, w)


LEMMAS = ("comparison_dirichlet", "comparison_neumann", "harnack_interior",
          "jensen_interior", "jensen_neumann", "jensen_initial")


def run_lab(lemma: str, seeds, beta: float = 2.0) -> list:
    """Run one lemma over a witness per seed; rows carry the witness for replay."""
    runners = {
        "comparison_dirichlet": lambda rng, s: _lab_dirichlet(rng, s),
        "comparison_neumann": lambda rng, s: _lab_neumann(rng, s),
        "harnack_interior": lambda rng, s: _lab_harnack(rng, s),
        "jensen_interior": lambda rng, s: _lab_jensen_interior(rng, s, beta),
        "jensen_neumann": lambda rng, s: _lab_jensen_neumann(rng, s, beta),
        "jensen_initial": lambda rng, s: _lab_jensen_initial(rng, s, beta),
    }
    if lemma not in runners:
        raise BadParameter(f"unknown lemma {lemma!r}; choose from {LEMMAS}")
    return [runners[lemma](np.random.default_rng(int(s)), int(s)) for s in seeds]


def lab_tightness(lemma: str, seeds, beta: float = 2.0) -> float:
    """Largest ``lhs / rhs`` over the seeded witness family for one lemma.

    The stored constants come from the structure of the bounds rather than
    from a fit; this reports how much of their slack the family actually uses.
    """
    rows = run_lab(lemma, seeds, beta)
    return max(r.lhs / r.rhs if r.rhs > 0 else float(r.lhs) for r in rows)

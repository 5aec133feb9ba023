"""Experiment configuration: a YAML document with strict key checking."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .estimates import Schedule
from .exceptions import CongestFlowError, ConfigError
from .functionals import (
    GPlusW,
    PrescribedTarget,
    ProblemSpec,
    check_weak_exponent,
    congestion_from_name,
    potential_from_name,
)
from .grid import Grid, from_density
from .seqlemmas import LEMMAS
from .solver import SolverParams

OUTPUT_ROOT_ENV = "CONGESTFLOW_OUTPUT_ROOT"

TOP_KEYS = {"seed", "problem", "solver", "checks", "output"}
PROBLEM_KEYS = {"n", "T", "N", "lam", "rho0", "congestion", "potential", "potential_scale", "final"}
DENSITY_KEYS = {"kind", "amplitude", "frequency", "values"}
FINAL_KEYS = {"kind", "density", "g", "W", "W_scale"}
SOLVER_KEYS = {"max_sweeps", "sweep_tol", "slice_tol", "damping", "max_newton", "polish",
               "slice_method", "lambda_schedule"}
CHECK_KEYS = {
    "convexity": {"m_list", "floor", "omega_bound"},
    "flow_interchange": {"m_list", "floor", "slice_tol"},
    "boundary": {"m_list", "floor"},
    "moser": {"schedule", "beta", "eps0", "window", "n_max", "m_start", "ratio_bound",
              "ratio_from", "limit_tol"},
    "seqlab": {"lemmas", "count", "beta"},
}
OUTPUT_KEYS = {"dir", "plots", "m_list"}


@dataclass
class CheckConfig:
    name: str
    params: dict


@dataclass
class ExperimentConfig:
    problem: dict
    solver: SolverParams
    checks: list
    curve_file: Path | None
    output_dir: Path
    plots: bool
    um_list: list
    seed: int
    spec: ProblemSpec | None = field(default=None, repr=False)


def _unknown(section: str, given: dict, allowed: set):
    extra = [k for k in given if k not in allowed]
    if extra:
        where = f"{section}." if section else ""
        raise ConfigError(f"unknown key '{where}{extra[0]}'")


def _mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{where}' must be a mapping")
    return value


def _number(d: dict, key: str, where: str, default=None, positive=False, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key '{where}.{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{where}.{key}' must be a number")
    if integer and int(v) != v:
        raise ConfigError(f"'{where}.{key}' must be an integer")
    if positive and not v > 0:
        raise ConfigError(f"'{where}.{key}' must be positive")
    return int(v) if integer else float(v)


def density_values(desc, grid: Grid, where: str) -> np.ndarray:
    """Cell values for a density description: uniform, cosine or explicit values."""
    desc = _mapping(desc, where) if desc is not None else {"kind": "uniform"}
    _unknown(where, desc, DENSITY_KEYS)
    kind = desc.get("kind", "uniform")
    x = grid.centers
    if kind == "uniform":
        return np.ones(grid.n)
    if kind == "cosine":
        a = _number(desc, "amplitude", where, 0.5)
        f = _number(desc, "frequency", where, 1.0)
        if abs(a) >= 1:
            raise ConfigError(f"'{where}.amplitude' must lie in (-1, 1)")
        vals = 1.0 + a * np.cos(f * math.pi * x)
        return vals
    if kind == "values":
        vals = np.asarray(desc.get("values", []), dtype=float)
        if vals.shape != (grid.n,):
            raise ConfigError(f"'{where}.values' needs {grid.n} entries")
        return vals
    raise ConfigError(f"'{where}.kind' must be uniform, cosine or values")


def build_spec(problem: dict, n: int | None = None, N: int | None = None,
               lam: float | None = None) -> ProblemSpec:
    """Problem from its config section, optionally at another resolution."""
    p = problem
    grid = Grid(int(n if n is not None else p["n"]))
    try:
        rho0 = from_density(grid, density_values(p.get("rho0"), grid, "problem.rho0"), normalize=True)
        congestion = congestion_from_name(p.get("congestion", "um:2"))
        V = potential_from_name(p.get("potential", "zero"), grid, float(p.get("potential_scale", 1.0)))
        final = _mapping(p.get("final", {"kind": "target"}), "problem.final")
        _unknown("problem.final", final, FINAL_KEYS)
        kind = final.get("kind", "target")
        if kind == "target":
            target = from_density(grid, density_values(final.get("density"), grid, "problem.final.density"),
                                  normalize=True)
            psi = PrescribedTarget(target)
        elif kind == "g_plus_w":
            W = potential_from_name(final.get("W", "zero"), grid, float(final.get("W_scale", 1.0)))
            psi = GPlusW(congestion_from_name(final.get("g", "um:2")), W)
        else:
            raise ConfigError("'problem.final.kind' must be target or g_plus_w")
        return ProblemSpec(grid, float(p["T"]), int(N if N is not None else p["N"]),
                           float(lam if lam is not None else p["lam"]), rho0, congestion, V, psi)
    except ConfigError:
        raise
    except CongestFlowError as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc


def _solver_params(d: dict) -> SolverParams:
    _unknown("solver", d, SOLVER_KEYS)
    kwargs = dict(d)
    if "lambda_schedule" in kwargs and kwargs["lambda_schedule"] is not None:
        sched = kwargs["lambda_schedule"]
        if isinstance(sched, dict):
            _unknown("solver.lambda_schedule", sched, {"start", "factor", "steps"})
            sched = (sched.get("start"), sched.get("factor"), sched.get("steps"))
        if not isinstance(sched, (list, tuple)) or len(sched) != 3:
            raise ConfigError("'solver.lambda_schedule' needs start, factor and steps")
        kwargs["lambda_schedule"] = (float(sched[0]), float(sched[1]), int(sched[2]))
    try:
        return SolverParams(**kwargs)
    except (CongestFlowError, TypeError) as exc:
        raise ConfigError(f"invalid solver section: {exc}") from exc


def _floor(value, where: str):
    if value is None or value == "auto":
        return "auto"
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
        raise ConfigError(f"'{where}' must be 'auto' or a nonnegative number")
    return float(value)


def _m_list(d: dict, where: str, default) -> list:
    vals = d.get("m_list", default)
    if not isinstance(vals, list) or not all(isinstance(m, (int, float)) and not isinstance(m, bool)
                                             for m in vals):
        raise ConfigError(f"'{where}.m_list' must be a list of numbers")
    return [float(m) for m in vals]


def _checks(section: dict, spec: ProblemSpec) -> list:
    out = []
    for name, params in section.items():
        if name == "curve_file":
            continue
        if name not in CHECK_KEYS:
            raise ConfigError(f"unknown key 'checks.{name}'")
        params = _mapping(params, f"checks.{name}")
        _unknown(f"checks.{name}", params, CHECK_KEYS[name])
        where = f"checks.{name}"
        if name == "convexity":
            p = {"m_list": _m_list(params, where, [1, 2, 3, 5]), "floor": _floor(params.get("floor"), where),
                 "omega_bound": _number(params, "omega_bound", where, 0.0)}
        elif name == "flow_interchange":
            p = {"m_list": _m_list(params, where, [1, 2, 4]), "floor": _floor(params.get("floor"), where),
                 "slice_tol": _number(params, "slice_tol", where, 1e-6, positive=True)}
        elif name == "boundary":
            if not isinstance(spec.psi, GPlusW):
                raise ConfigError("'checks.boundary' needs problem.final.kind = g_plus_w")
            p = {"m_list": _m_list(params, where, [2, 4]), "floor": _floor(params.get("floor"), where)}
        elif name == "moser":
            try:
                schedule = Schedule(params.get("schedule", "Strong"))
            except ValueError as exc:
                raise ConfigError(f"'{where}.schedule' must be Strong or Weak") from exc
            window = params.get("window", [0.25 * spec.T, 0.75 * spec.T])
            if not isinstance(window, list) or len(window) not in (1, 2):
                raise ConfigError(f"'{where}.window' must be [T1] or [T1, T2]")
            p = {"schedule": schedule.value,
                 "beta": _number(params, "beta", where, 4.0),
                 "eps0": _number(params, "eps0", where, 0.1, positive=True),
                 "window": [float(x) for x in window],
                 "n_max": _number(params, "n_max", where, 6, integer=True),
                 "m_start": params.get("m_start"),
                 "ratio_bound": _number(params, "ratio_bound", where, 1.1, positive=True),
                 "ratio_from": _number(params, "ratio_from", where, 3, integer=True),
                 "limit_tol": _number(params, "limit_tol", where, 0.1, positive=True)}
            if p["beta"] <= 1:
                raise ConfigError(f"'{where}.beta' must exceed 1")
            if schedule is Schedule.WEAK:
                try:
                    check_weak_exponent(spec.congestion.alpha, float(p["m_start"] or 2.0), p["beta"])
                except CongestFlowError as exc:
                    raise ConfigError(f"'{where}': {exc}") from exc
            tail = p["eps0"] * p["beta"] / (p["beta"] - 1.0)
            T1 = p["window"][0]
            T2 = p["window"][1] if len(p["window"]) == 2 else None
            if T1 - tail < 0 or (T2 is not None and (T2 < T1 or T2 + tail > spec.T)):
                raise ConfigError(f"'{where}.window' enlarged by the margins leaves [0, T]")
        else:
            lemmas = params.get("lemmas", list(LEMMAS))
            if not isinstance(lemmas, list) or any(lem not in LEMMAS for lem in lemmas):
                raise ConfigError(f"'{where}.lemmas' must list names from {list(LEMMAS)}")
            p = {"lemmas": lemmas, "count": _number(params, "count", where, 100, positive=True, integer=True),
                 "beta": _number(params, "beta", where, 2.0)}
        out.append(CheckConfig(name, p))
    return out


def load_config(path, output_override=None) -> ExperimentConfig:
    """Parse and validate a config file; every failure raises ConfigError."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = _mapping(raw, "<root>")
    _unknown("", raw, TOP_KEYS)
    problem = _mapping(raw.get("problem"), "problem")
    _unknown("problem", problem, PROBLEM_KEYS)
    for key, integer in (("n", True), ("T", False), ("N", True), ("lam", False)):
        _number(problem, key, "problem", integer=integer)
    spec = build_spec(problem)
    solver = _solver_params(_mapping(raw.get("solver"), "solver"))
    checks_raw = _mapping(raw.get("checks"), "checks")
    checks = _checks(checks_raw, spec)
    curve_file = checks_raw.get("curve_file")
    if curve_file is not None:
        curve_file = Path(curve_file)
        if not curve_file.is_absolute():
            curve_file = path.parent / curve_file
    output = _mapping(raw.get("output"), "output")
    _unknown("output", output, OUTPUT_KEYS)
    out_dir = Path(output_override) if output_override else Path(output.get("dir", "congestflow_out"))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out_dir.is_absolute():
        out_dir = Path(root) / out_dir
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("'seed' must be an integer")
    um_list = _m_list(output, "output", [1, 2, 3])
    return ExperimentConfig(problem, solver, checks, curve_file, out_dir, bool(output.get("plots", True)),
                            um_list, seed, spec)

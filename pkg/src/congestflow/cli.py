"""Command-line runner: ``congestflow {solve,verify,seqlab,plot}``.

Exit codes: 0 when every check passes, 1 when a check fails beyond its
floor (or the solver does not converge), 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_spec, load_config
from .estimates import (
    boundary_flow_check,
    extrapolated_floor,
    flow_interchange_report,
    moser_trace,
    omega_estimate,
    sup_density,
    violation,
)
from .exceptions import CongestFlowError, ConfigError, MissingArtifact, NotConverged
from .functionals import discrete_action
from .grid import DiscreteCurve, from_density
from .plots import emit_plots, read_solution
from .seqlemmas import run_lab
from .solver import solve

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
ROUNDOFF = 1e-10


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    return obj


class _Artifacts:
    """Tracks files written by a run so a failed configuration leaves nothing behind."""

    def __init__(self, root: Path):
        self.root = root
        self.created_root = not root.exists()
        self.files: list[Path] = []

    def ensure(self):
        self.root.mkdir(parents=True, exist_ok=True)

    def write_csv(self, name: str, header, rows):
        self.ensure()
        path = self.root / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(path)

    def write_json(self, name: str, payload):
        self.ensure()
        path = self.root / name
        path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")
        self.files.append(path)

    def remove(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_root and self.root.exists() and not any(self.root.iterdir()):
            self.root.rmdir()


def solution_rows(curve: DiscreteCurve):
    x = curve.grid.centers
    for k, (t, s) in enumerate(zip(curve.times, curve.slices)):
        for i, r in enumerate(s.rho):
            yield (k, t, i, x[i], r)


def load_curve(path: Path, spec) -> DiscreteCurve:
    """Read a curve written as ``solution.csv``; shape must match the problem."""
    try:
        _, times, _, rho = read_solution(path)
    except (MissingArtifact, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read curve file: {exc}") from exc
    if rho.shape != (spec.N + 1, spec.grid.n):
        raise ConfigError(f"curve file has shape {rho.shape}, problem expects {(spec.N + 1, spec.grid.n)}")
    try:
        slices = tuple(from_density(spec.grid, r, normalize=True) for r in rho)
    except CongestFlowError as exc:
        raise ConfigError(f"curve file holds an invalid density: {exc}") from exc
    return DiscreteCurve(spec.grid, spec.T, spec.N, slices)


class _Runner:
    def __init__(self, cfg: ExperimentConfig, art: _Artifacts):
        self.cfg = cfg
        self.art = art
        self.spec = cfg.spec
        self._coarse = None

    def coarse(self):
        """Same problem at half the cells, solved once for two-resolution floors."""
        if self._coarse is None:
            n = self.spec.grid.n // 2
            if n < 2:
                raise ConfigError("grid too small for an automatic floor")
            spec = build_spec(self.cfg.problem, n=n)
            curve, _ = solve(spec, self.cfg.solver)
            self._coarse = (curve, spec)
        return self._coarse

    def judge(self, measure, curve, floor) -> dict:
        fine = measure(curve, self.spec)
        if floor == "auto":
            c_curve, c_spec = self.coarse()
            est = extrapolated_floor(c_spec.grid.n, measure(c_curve, c_spec), self.spec.grid.n, fine, ROUNDOFF)
            return {"violation": fine, "coarse_violation": est.floor_coarse, "floor": "auto",
                    "shrink": est.shrink, "passed": est.shrinks()}
        return {"violation": fine, "floor": floor, "passed": fine <= floor}

    def convexity(self, curve, p):
        def measure(c, spec):
            return max((max(0.0, omega_estimate(c, m) - p["omega_bound"]) for m in p["m_list"]), default=0.0)
        out = self.judge(measure, curve, p["floor"])
        out["omega_sq"] = {f"{m:g}": omega_estimate(curve, m) for m in p["m_list"]}
        return out

    def flow_interchange(self, curve, p):
        try:
            rows = flow_interchange_report(curve, self.spec, p["m_list"], p["slice_tol"])
        except NotConverged as exc:
            return {"passed": False, "reason": str(exc)}
        self.art.write_csv("flow_interchange.csv", ["k", "m", "lhs", "rhs", "residual"],
                           ((r.k, r.m, r.lhs, r.rhs, r.residual) for r in rows))

        def measure(c, spec):
            return violation([r.residual for r in flow_interchange_report(c, spec, p["m_list"], p["slice_tol"])])
        try:
            return self.judge(measure, curve, p["floor"])
        except NotConverged as exc:
            return {"passed": False, "reason": str(exc)}

    def boundary(self, curve, p):
        def measure(c, spec):
            return max((max(0.0, -boundary_flow_check(c, spec, m)) for m in p["m_list"]), default=0.0)
        out = self.judge(measure, curve, p["floor"])
        out["values"] = {f"{m:g}": boundary_flow_check(curve, self.spec, m) for m in p["m_list"]}
        return out

    def moser(self, curve, p):
        T1 = p["window"][0]
        T2 = p["window"][1] if len(p["window"]) == 2 else None
        m_start = float(p["m_start"]) if p["m_start"] is not None else None
        trace = moser_trace(curve, self.spec, p["schedule"], p["beta"], p["eps0"], T1, T2,
                            p["n_max"], m_start)
        self.art.write_csv("moser.csv", ["n", "m_n", "T1n", "T2n", "L"],
                           ((n, m, a, b, L) for n, (m, a, b, L) in enumerate(
                               zip(trace.m_values, trace.window_starts, trace.window_ends, trace.L_values))))
        ratios = trace.ratios()[p["ratio_from"]:]
        sup = sup_density(curve, T1, T2 if T2 is not None else curve.T)
        limit_err = abs(trace.L_values[-1] - sup) / sup
        ok = bool(np.all(ratios <= p["ratio_bound"]) and limit_err <= p["limit_tol"])
        return {"passed": ok, "ratios": list(ratios), "limit": trace.L_values[-1], "sup_density": sup,
                "limit_rel_error": limit_err}

    def seqlab(self, p):
        rows = []
        for lemma in p["lemmas"]:
            rows += run_lab(lemma, range(self.cfg.seed, self.cfg.seed + p["count"]), p["beta"])
        self.art.write_csv("seqlab.csv", ["lemma", "seed", "lhs", "rhs", "pass"],
                           ((r.lemma, r.seed, r.lhs, r.rhs, r.passed) for r in rows))
        failures = [r for r in rows if not r.passed]
        out = {"passed": not failures, "runs": len(rows), "failures": len(failures)}
        if failures:
            out["first_failure"] = {"lemma": failures[0].lemma, "seed": failures[0].seed,
                                    "witness": failures[0].replay()}
        return out


def _obtain_curve(runner: _Runner, report: dict) -> DiscreteCurve:
    cfg = runner.cfg
    if cfg.curve_file is not None:
        curve = load_curve(cfg.curve_file, cfg.spec)
        history = [discrete_action(curve, cfg.spec)]
        report["solver"] = {"source": "curve_file", "converged": None}
    else:
        curve, sr = solve(cfg.spec, cfg.solver)
        history = sr.action_history
        report["solver"] = {"source": "solve", "converged": sr.converged, "sweeps": sr.sweeps_used,
                            "newton_steps": sr.newton_steps, "lambdas": sr.lambdas,
                            "max_slice_residual": float(sr.slice_residuals.max()) if sr.slice_residuals.size else 0.0}
    runner.art.write_csv("solution.csv", ["k", "t", "cell", "x", "rho"], solution_rows(curve))
    runner.art.write_csv("action.csv", ["sweep", "action"], enumerate(history))
    return curve


def run_experiment(cfg: ExperimentConfig, command: str = "verify") -> tuple[int, dict]:
    """Execute a validated config; returns the exit code and the report."""
    art = _Artifacts(cfg.output_dir)
    runner = _Runner(cfg, art)
    report = {"command": command, "seed": cfg.seed, "checks": {}, "um_list": cfg.um_list}
    try:
        passed = True
        if command in ("solve", "verify"):
            curve = _obtain_curve(runner, report)
            if report["solver"]["converged"] is False:
                passed = False
            if command == "verify":
                for check in cfg.checks:
                    if check.name == "seqlab":
                        result = runner.seqlab(check.params)
                    else:
                        result = getattr(runner, check.name)(curve, check.params)
                    report["checks"][check.name] = result
                    passed = passed and result["passed"]
            if cfg.plots:
                report["plots"] = emit_plots(cfg.output_dir, cfg.um_list)
        elif command == "seqlab":
            params = next((c.params for c in cfg.checks if c.name == "seqlab"), None)
            if params is None:
                raise ConfigError("seqlab needs a 'checks.seqlab' section")
            result = runner.seqlab(params)
            report["checks"]["seqlab"] = result
            passed = result["passed"]
        else:
            raise ConfigError(f"unknown command {command!r}")
        code = EXIT_OK if passed else EXIT_FAIL
        report["passed"] = passed
        report["exit_code"] = code
        art.write_json("report.json", report)
        return code, report
    except ConfigError:
        art.files += [cfg.output_dir / name for name in ("density.svg", "um_curves.svg", "moser.svg")]
        art.remove()
        raise


def _plot_command(directory: Path) -> int:
    report_path = directory / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else None
    m_list = report.get("um_list", [1.0, 2.0, 3.0]) if report else [1.0, 2.0, 3.0]
    notes = emit_plots(directory, m_list)
    if report is not None:
        report["plots"] = notes
        report_path.write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
    print(f"wrote {', '.join(notes['written'])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="congestflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "solve the configured problem"),
                            ("verify", "solve (or load a curve) and run the configured checks"),
                            ("seqlab", "run the sequence-lemma laboratory")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path)
        p.add_argument("--output-dir", type=Path, default=None)
    p = sub.add_parser("plot", help="draw SVG figures from the CSVs in a run directory")
    p.add_argument("directory", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            return _plot_command(args.directory)
        cfg = load_config(args.config, args.output_dir)
        code, report = run_experiment(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, result in report["checks"].items():
        status = "pass" if result["passed"] else "FAIL"
        detail = {k: v for k, v in result.items() if k in ("violation", "floor", "shrink", "failures", "reason")}
        print(f"{name}: {status} {json.dumps(_json_safe(detail), sort_keys=True)}")
    print(f"exit {code}; artifacts in {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())

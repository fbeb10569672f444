"""Command-line entry point: ``hivctl simulate|equilibria|stability|optimize|sweep``.

Exit codes: 0 success, 2 schema error, 3 numeric failure or non-convergence,
4 I/O error. HIVCTL_SEED is reserved; nothing here is stochastic.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ScenarioConfig
from .control import SweepSolution, solve
from .errors import (ConsistencyError, DomainError, NumericError, SchemaError,
                     SingularParameterError, SolverError)
from .model import (LABELS, EquilibriumReport, ModelParams, characteristic_polynomial,
                    equilibrium, hurwitz_stable, routh_hurwitz_coefficients, thresholds)
from .simulate import Trajectory, integrate, objective_value

log = logging.getLogger("hivctl")

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def fmt(value) -> str:
    """Shortest decimal string that round-trips the double."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _out_dir(cfg: ScenarioConfig) -> Path:
    path = Path(cfg.outputs.dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_trajectory_csv(path, traj: Trajectory, adjoints: bool = False) -> Path:
    header = ["t", "x", "y", "v", "z", "w"]
    cols = [traj.times[:, None], traj.states]
    if traj.controls is not None:
        header += ["u1", "u2"]
        cols.append(traj.controls[: len(traj.states)])
    if adjoints and traj.adjoints is not None:
        header += ["l1", "l2", "l3", "l4", "l5"]
        cols.append(traj.adjoints[: len(traj.states)])
    table = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in table.tolist():
            writer.writerow([repr(v) for v in row])
    return Path(path)


def _write_json(path, doc) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return Path(path)


def _report_dict(r: EquilibriumReport) -> dict:
    return {
        "label": r.label,
        "exists": r.exists,
        "point": None if r.point is None else dict(r.point._asdict()),
        "stability": None if r.stability is None else r.stability.value,
        "analytic": None if r.analytic is None else r.analytic.value,
        "numeric": None if r.numeric is None else r.numeric.value,
        "eigenvalues": None if r.eigenvalues is None
        else [[float(e.real), float(e.imag)] for e in r.eigenvalues],
        "reason": r.reason,
    }


def _reports(p: ModelParams) -> tuple[list[dict], list]:
    """Per-equilibrium dictionaries; failures are recorded in place rather than raised."""
    out, reports = [], []
    for label in LABELS:
        try:
            r = equilibrium(p, label)
        except (SingularParameterError, NumericError, ConsistencyError) as exc:
            out.append({"label": label, "exists": None, "error": str(exc)})
            reports.append(None)
            continue
        out.append(_report_dict(r))
        reports.append(r)
    return out, reports


def _thresholds_dict(p: ModelParams) -> dict:
    try:
        return {"thresholds": thresholds(p).as_dict()}
    except SingularParameterError as exc:
        return {"thresholds": None, "thresholds_error": str(exc)}


def run_simulate(cfg: ScenarioConfig) -> Path:
    traj, mon = integrate(cfg.params, cfg.initial, cfg.grid_for("simulate"), None, cfg.method)
    path = write_trajectory_csv(_out_dir(cfg) / "trajectory.csv", traj)
    if mon.blowup:
        raise NumericError(f"integration blew up at step {mon.abort_step}; partial trajectory in {path}")
    if mon.negative_steps or mon.bound_violations:
        log.warning("monitor: min component %g, %d negative samples, %d bound violations",
                    mon.min_component, mon.negative_steps, mon.bound_violations)
    return path


def run_equilibria(cfg: ScenarioConfig) -> Path:
    doc = _thresholds_dict(cfg.params)
    doc["equilibria"], _ = _reports(cfg.params)
    return _write_json(_out_dir(cfg) / "equilibria.json", doc)


def run_stability(cfg: ScenarioConfig) -> Path:
    """Equilibrium report plus the characteristic-polynomial cross-checks for each existing point."""
    p = cfg.params
    doc = _thresholds_dict(p)
    entries, reports = _reports(p)
    for entry, r in zip(entries, reports):
        if r is None or not r.exists:
            continue
        poly = characteristic_polynomial(p, r.label, r.point)
        entry["characteristic_polynomial"] = [float(c) for c in poly]
        entry["hurwitz_stable"] = bool(hurwitz_stable(poly))
        if r.label != "Ef":
            entry["closed_form_coefficients"] = [
                float(c) for c in routh_hurwitz_coefficients(p, r.label, r.point)]
    doc["equilibria"] = entries
    return _write_json(_out_dir(cfg) / "stability.json", doc)


def run_optimize(cfg: ScenarioConfig) -> tuple[Path, Path, SweepSolution]:
    p = cfg.params
    grid = cfg.grid_for("optimize")
    sol = solve(p, cfg.initial, grid, cfg.sweep, cfg.method)
    # the single-pass algorithm is Euler throughout, so its baseline is too
    method = "euler" if cfg.sweep.mode == "paper" else cfg.method
    zero = np.zeros((grid.n + 1, 2))
    base, mon = integrate(p, cfg.initial, grid, zero, method)
    if mon.blowup:
        raise NumericError(f"uncontrolled reference run blew up at step {mon.abort_step}")
    U = sol.trajectory.controls
    summary = {
        "objective": sol.objective,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "final_delta": sol.final_delta,
        "objective_uncontrolled": objective_value(base, p),
        "mode": cfg.sweep.mode,
        "method": method,
        "v_final": float(sol.trajectory.states[-1, 2]),
        "v_final_uncontrolled": float(base.states[-1, 2]),
        "mean_u1": float(np.mean(U[:, 0])),
        "mean_u2": float(np.mean(U[:, 1])),
    }
    out = _out_dir(cfg)
    csv_path = write_trajectory_csv(out / "optimal.csv", sol.trajectory, cfg.outputs.adjoints)
    json_path = _write_json(out / "optimize_summary.json", summary)
    return csv_path, json_path, sol


def run_sweep(cfg: ScenarioConfig, axis: str, values) -> Path:
    attr = cfgmod.resolve_param(axis)
    header = ["value", "r0", "rCtl", "rW", "rCtlW1", "rCtlW2"]
    for label in LABELS:
        header += [f"{label}_exists", f"{label}_stability"]
    rows = []
    for value in values:
        try:
            p = replace(cfg.params, **{attr: float(value)})
        except DomainError as exc:
            raise SchemaError(f"values[{value!r}]", str(exc)) from exc
        try:
            th = thresholds(p).as_dict()
            row = [fmt(value)] + [fmt(th[k]) for k in header[1:6]]
        except SingularParameterError:
            row = [fmt(value)] + [""] * 5
        _, reports = _reports(p)
        for r in reports:
            if r is None:
                row += ["", "error"]
            else:
                row += [fmt(r.exists), r.stability.value]
        rows.append(row)
    path = _out_dir(cfg) / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise SchemaError("values", f"expected comma-separated numbers: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hivctl", description="HIV model with CTL/antibody immunity and optimal two-drug therapy")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "equilibria", "stability", "optimize", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON scenario file (defaults to the reference scenario)")
        sp.add_argument("--out", help="output directory (overrides outputs.dir)")
        sp.add_argument("--method", choices=["euler", "rk4"], help="integrator")
        sp.add_argument("--mode", choices=["paper", "fbsm"], help="sweep mode for optimize")
        if name == "sweep":
            sp.add_argument("--axis", required=True, help="parameter to vary, e.g. N or beta")
            sp.add_argument("--values", required=True, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config) if args.config else ScenarioConfig()
        if args.out:
            cfg = replace(cfg, outputs=replace(cfg.outputs, dir=args.out))
        if args.method:
            cfg = replace(cfg, method=args.method)
        if args.mode:
            cfg = replace(cfg, sweep=replace(cfg.sweep, mode=args.mode))

        if args.command == "simulate":
            log.info("wrote %s", run_simulate(cfg))
        elif args.command == "equilibria":
            log.info("wrote %s", run_equilibria(cfg))
        elif args.command == "stability":
            log.info("wrote %s", run_stability(cfg))
        elif args.command == "optimize":
            csv_path, json_path, sol = run_optimize(cfg)
            log.info("wrote %s and %s", csv_path, json_path)
            if not sol.converged:
                log.error("sweep did not converge: final_delta=%g after %d iterations",
                          sol.final_delta, sol.iterations)
                return EXIT_NUMERIC
        elif args.command == "sweep":
            log.info("wrote %s", run_sweep(cfg, args.axis, _parse_values(args.values)))
    except SchemaError as exc:
        log.error("schema error: %s", exc)
        return EXIT_SCHEMA
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (NumericError, ConsistencyError, SolverError, SingularParameterError, DomainError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

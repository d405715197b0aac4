"""Command-line front end: one scenario file drives one command family.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 terminal
insolvable-class error.  Identical inputs produce byte-identical artifacts;
wall-clock timings go to stdout only, never into the artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import exports
from .expr import ExpressionError
from .games import (ConfigurationError, DivergenceError, SimulationError,
                    check_indeterminate_invariants, coalition_simulate, simulate)
from .prediction import DataError, strategic_pipeline, unravel_by_filtering
from .repdyn import (StrandedClassError, integrate_repdyn, integrate_scalar_reference,
                     run_tactical_repdyn, solve_inverse_problem)
from .scenario import COMMANDS, Scenario, ScenarioError, load_scenario
from .tactics import run_commented_game, tactical_interaction, tactical_synthesis
from .verbalization import (DomainError, RecurrenceMap, detect_partition, fit_recurrence,
                            verify_recurrence, windows_from_trajectory)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INSOLVABLE = 3

TOLERANCE_ENV = "TACTICA_TOLERANCE"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactica",
        description="Simulation and analysis engine for interactive games, "
                    "verbalization, tactics and representative dynamics")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", help="scenario file (YAML key/value tree)")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument("--dt", type=float, default=None, help="override the run step")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed recorded in the run report")
    parser.add_argument("--batch", default=None,
                        help="comma-separated scenario files run concurrently, "
                             "each into its own subdirectory of --out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.batch is None and args.scenario is None:
        print("error: --scenario or --batch is required", file=sys.stderr)
        return EXIT_VALIDATION
    if args.batch is not None:
        paths = [p.strip() for p in args.batch.split(",") if p.strip()]
        out_root = Path(args.out)

        def one(path: str) -> int:
            return run_command(args.command, path, out_root / Path(path).stem,
                               args.dt, args.seed)

        with ThreadPoolExecutor(max_workers=min(4, max(1, len(paths)))) as pool:
            codes = list(pool.map(one, paths))
        return max(codes) if codes else EXIT_VALIDATION
    return run_command(args.command, args.scenario, Path(args.out), args.dt, args.seed)


def run_command(command: str, scenario_path, out_dir: Path, dt_override: float | None,
                seed: int) -> int:
    started = time.perf_counter()
    try:
        scenario = load_scenario(scenario_path)
    except ScenarioError as exc:
        for line in exc.errors:
            print(f"validation: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    if not scenario.supports(command):
        supported = ", ".join(scenario.supported_commands()) or "none"
        print(f"usage: scenario {scenario.title!r} does not support {command!r}; "
              f"it supports: {supported}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dt = dt_override if dt_override is not None else scenario.run.dt
    tolerance = scenario.tolerance if scenario.tolerance is not None else 1e-9
    env_tol = os.environ.get(TOLERANCE_ENV)
    if env_tol is not None:
        tolerance = float(env_tol)

    report = {
        "schema": 1,
        "command": command,
        "scenario": scenario.title,
        "digest": hashlib.sha256(Path(scenario_path).read_bytes()).hexdigest(),
        "seed": seed,
        "dt": dt,
        "tolerance": tolerance,
        "summaries": {},
        "checks": [],
    }
    runner = _RUNNERS[command]
    exit_code = EXIT_OK
    try:
        exit_code = runner(scenario, out_dir, dt, tolerance, report) or EXIT_OK
    except StrandedClassError as exc:
        print(f"insolvable: {exc}", file=sys.stderr)
        return EXIT_INSOLVABLE
    except DivergenceError as exc:
        print(f"runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigurationError, SimulationError, DataError, DomainError,
            ExpressionError, ScenarioError) as exc:
        print(f"runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    exports.write_json(report, out_dir / "report.json")
    duration = time.perf_counter() - started
    checks = report["checks"]
    status = "ok" if all(c["passed"] for c in checks) else "checks failed"
    print(f"{command} {scenario.title}: {status} "
          f"({len(checks)} checks, {duration:.3f}s, artifacts in {out_dir})")
    return exit_code


def _add_check(report: dict, name: str, value: float, tol: float) -> None:
    report["checks"].append({
        "name": name,
        "value": float(value),
        "tolerance": float(tol),
        "passed": bool(value <= tol),
    })


# ---------------------------------------------------------------------------
# Command runners
# ---------------------------------------------------------------------------

def _run_simulate(scenario: Scenario, out: Path, dt: float, tolerance: float,
                  report: dict) -> int:
    system, initial, slow = scenario.build_system()
    run = scenario.run
    if system.coalitions:
        traj = coalition_simulate(system, initial, run.t0, run.t1, dt, slow=slow)
    else:
        traj = simulate(system, initial, run.t0, run.t1, dt, slow=slow)
    exports.write_trajectory_csv(traj, out / "trajectory.csv")
    exports.write_trajectory_json(traj, out / "trajectory.json")
    report["summaries"]["final_state"] = traj.phi[-1]
    report["summaries"]["samples"] = len(traj.t)
    if system.invariant_constraints:
        drifts = check_indeterminate_invariants(traj, system.invariant_constraints,
                                                tol=tolerance)
        report["summaries"]["invariants"] = [
            {"label": d.label, "drift": d.drift, "violated": d.violated} for d in drifts]
        for d in drifts:
            _add_check(report, f"invariant {d.label}", d.drift, tolerance)
    return EXIT_OK


def _run_verbalize(scenario: Scenario, out: Path, dt: float, tolerance: float,
                   report: dict) -> int:
    system, initial, slow = scenario.build_system()
    run = scenario.run
    traj = simulate(system, initial, run.t0, run.t1, dt, slow=slow)
    plan = scenario.verbalization_plan()
    records = windows_from_trajectory(traj, plan.grid, plan.omega_functionals,
                                      plan.v_functionals, plan.cells)
    exports.write_trajectory_csv(traj, out / "trajectory.csv")
    exports.write_windows_csv(records, out / "windows.csv")
    exports.write_windows_json(records, out / "windows.json")
    report["summaries"]["windows"] = len(records)
    if plan.cells is not None:
        transitions = detect_partition(traj.t, traj.eps, plan.cells)
        report["summaries"]["transitions"] = transitions
    if plan.recurrence is not None:
        rec = plan.recurrence
        tol = float(rec.get("tol", 1e-6))
        if rec["family"] == "declared":
            from .expr import compile_vector
            dim_omega = len(np.atleast_1d(records[0].omega))
            dim_v = len(np.atleast_1d(records[0].v))
            fn = compile_vector(rec["expression"], scalars=(),
                                vectors={"omega": dim_omega, "v": dim_v})
            rmap = RecurrenceMap(family="declared",
                                 form=lambda om, v, window, _f=fn: _f.fn(om, v))
            result = verify_recurrence(records, rmap, tol)
            report["summaries"]["recurrence"] = {
                "family": "declared", "residuals": result.residuals}
            _add_check(report, "recurrence residual", result.max_residual, tol)
        else:
            k = int(rec["fit_windows"])
            fitted = fit_recurrence(records[:k])
            holdout = verify_recurrence(records[k - 1:], fitted, tol)
            report["summaries"]["recurrence"] = {
                "family": "fitted-affine",
                "coeff_omega": fitted.coeff_omega,
                "coeff_v": fitted.coeff_v,
                "intercept": fitted.intercept,
                "rank_deficient": fitted.rank_deficient,
                "fit_residual": fitted.fit_residual,
                "holdout_residuals": holdout.residuals,
            }
            _add_check(report, "recurrence holdout residual", holdout.max_residual, tol)
    return EXIT_OK


def _run_tactics(scenario: Scenario, out: Path, dt: float, tolerance: float,
                 report: dict) -> int:
    plan = scenario.tactics_plan()
    if plan.mode == "commented":
        runs = [run_commented_game(plan.games[0])]
    elif plan.mode == "interaction":
        coupled = tactical_interaction(plan.games[0], plan.games[1],
                                       plan.terms[0], plan.terms[1])
        runs = coupled.run()
    else:
        synthesized = tactical_synthesis(plan.games, plan.synthesis)
        runs = synthesized.run()
    report["summaries"]["mode"] = plan.mode
    report["summaries"]["games"] = len(runs)
    for j, game_run in enumerate(runs):
        suffix = "" if len(runs) == 1 else f"_{j + 1}"
        exports.write_trajectory_csv(game_run.trajectory, out / f"trajectory{suffix}.csv")
        exports.write_windows_csv(game_run.windows, out / f"windows{suffix}.csv")
        exports.write_comments_jsonl(game_run.comments, out / f"comments{suffix}.jsonl")
        report["summaries"][f"final_theta{suffix or '_1'}"] = game_run.comments[-1].vector
    return EXIT_OK


def _run_predict(scenario: Scenario, out: Path, dt: float, tolerance: float,
                 report: dict) -> int:
    system, initial, slow = scenario.build_system()
    run = scenario.run
    traj = simulate(system, initial, run.t0, run.t1, dt, slow=slow)
    plan = scenario.prediction_plan()
    exports.write_trajectory_csv(traj, out / "trajectory.csv")
    if plan.filter is not None:
        result = unravel_by_filtering(traj, plan.filter, plan.family)
        header = ["t"] + [f"u0_{i}" for i in range(result.u0.shape[1])] \
            + [f"residual_{i}" for i in range(result.residual.shape[1])]
        exports.write_csv(out / "unravel.csv", header,
                          ([traj.t[k]] + list(result.u0[k]) + list(result.residual[k])
                           for k in range(len(traj.t))))
        summary: dict = {"max_residual": float(np.max(np.abs(result.residual)))}
        if result.estimate is not None:
            summary["family"] = list(result.estimate.family)
            summary["coefficients"] = result.estimate.coefficients
            summary["fit_residual_norm"] = result.estimate.residual_norm
        report["summaries"]["unravel"] = summary
    if plan.pipeline is not None:
        prognosis = strategic_pipeline(system, initial, run.t0, run.t1, dt,
                                       plan.pipeline.assumed_eps,
                                       plan.pipeline.horizon, truth=traj)
        exports.write_prognosis_json(prognosis, out / "prognosis.json")
        report["summaries"]["pipeline"] = {
            "horizon": plan.pipeline.horizon,
            "mean_long_error": float(np.mean(prognosis.long_error)),
            "mean_blended_error": float(np.mean(prognosis.blended_error)),
            "max_blended_error": float(np.max(prognosis.blended_error)),
        }
    return EXIT_OK


def _run_repdyn(scenario: Scenario, out: Path, dt: float, tolerance: float,
                report: dict) -> int:
    plan = scenario.repdyn_plan()
    run = scenario.run
    if plan.mode == "integrate":
        result = integrate_repdyn(plan.spec, plan.control, run.t0, run.t1, dt)
        exports.write_residuals_csv(result.times, result.residuals,
                                    out / "residuals.csv")
        exports.write_json({
            "initial": exports.matrix_tuple_to_json(plan.spec.initial.matrices,
                                                    plan.spec.initial.time),
            "final": exports.matrix_tuple_to_json(result.final.matrices,
                                                  float(result.times[-1])),
        }, out / "tuples.json")
        report["summaries"]["max_residual"] = float(np.max(result.residuals))
        _add_check(report, "relation residual", float(np.max(result.residuals)),
                   plan.spec.insolvable_threshold)
        if result.insolvable is not None:
            report["summaries"]["insolvable"] = {
                "time": result.insolvable.time,
                "residual": result.insolvable.residual,
                "reason": result.insolvable.reason,
            }
            exports.write_json(report, out / "report.json")
            print(f"insolvable in the declared class at t={result.insolvable.time!r}",
                  file=sys.stderr)
            return EXIT_INSOLVABLE
        return EXIT_OK
    result = run_tactical_repdyn(plan.tactical, plan.windows, dt)
    exports.write_residuals_csv(result.times, result.residuals, out / "residuals.csv")
    exports.write_comments_jsonl(result.class_stream, out / "comments.jsonl",
                                 delta_label=plan.tactical.delta.label)
    exports.write_windows_csv(result.windows, out / "windows.csv")
    report["summaries"]["transitions"] = [
        {"time": tr.time, "window": tr.window_index, "from": tr.from_class,
         "to": tr.to_class, "residual": tr.residual} for tr in result.transitions]
    report["summaries"]["classes"] = [c.class_label for c in result.class_stream]
    report["summaries"]["equivalence"] = (
        "registry-label equality; a conservative stand-in for isomorphism-based "
        "pair equivalence")
    report["summaries"]["max_residual"] = float(np.max(result.residuals))
    _add_check(report, "relation residual", float(np.max(result.residuals)),
               plan.tactical.insolvable_threshold)
    return EXIT_OK


def _run_invert(scenario: Scenario, out: Path, dt: float, tolerance: float,
                report: dict) -> int:
    plan = scenario.invert_plan()
    run = scenario.run
    construction = solve_inverse_problem(
        plan.rhs, plan.x0, control_dim=plan.control_dim, matrix_dim=plan.matrix_dim,
        designated_slot=plan.designated_slot, lift_constants=plan.lift_constants,
        tolerance=tolerance)
    schedule = construction.control_schedule(plan.u_schedule)
    result = integrate_repdyn(construction.spec, schedule, run.t0, run.t1, dt)
    times, reference = integrate_scalar_reference(plan.rhs, plan.x0, plan.u_schedule,
                                                  run.t0, run.t1, dt,
                                                  control_dim=plan.control_dim)
    slot = construction.designated_slot
    slots = np.array([[T.matrices[i][slot, slot].real for i in range(len(plan.rhs))]
                      for T in result.tuples])
    deviation = float(np.max(np.abs(slots - reference)))
    header = ["t"] + [f"slot_{i}" for i in range(len(plan.rhs))] \
        + [f"reference_{i}" for i in range(len(plan.rhs))]
    exports.write_csv(out / "slot_trace.csv", header,
                      ([times[k]] + list(slots[k]) + list(reference[k])
                       for k in range(len(times))))
    exports.write_residuals_csv(result.times, result.residuals, out / "residuals.csv")
    report["summaries"]["symbolic_match"] = construction.symbolic_match
    report["summaries"]["control_names"] = list(construction.control_names)
    report["summaries"]["slot_vs_scalar_deviation"] = deviation
    _add_check(report, "slot vs scalar deviation", deviation, 1e-9)
    if result.insolvable is not None:
        print("insolvable during the inverse verification run", file=sys.stderr)
        return EXIT_INSOLVABLE
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "verbalize": _run_verbalize,
    "tactics": _run_tactics,
    "predict": _run_predict,
    "repdyn": _run_repdyn,
    "invert": _run_invert,
}


if __name__ == "__main__":
    sys.exit(main())

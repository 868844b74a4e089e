"""Command-line entry point.

    lieddp validate SCENARIO
    lieddp solve SCENARIO -o DIR [--jacobian paper|numeric]
    lieddp mc SCENARIO -o DIR --samples N --mode open|fb [--nominal DIR] [--seed S]

SCENARIO is a JSON file or the name of a shipped fixture. Exit codes: 0 on
success (converged), 1 on input/output errors, 2 when the solver hits its
iteration limits, 3 when the rollout diverges.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import zipfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import solver as _solver
from .dynamics import Trajectory
from .exceptions import EmptyStatisticsError, GimbalLockError, ScenarioError
from .harness import MonteCarloStats, NoiseModel, monte_carlo
from .liegroup import euler_xyz
from .scenario import load_scenario, resolve_scenario

log = logging.getLogger("lieddp")

EXIT_OK = 0
EXIT_IO = 1
EXIT_MAX_ITERS = 2
EXIT_DIVERGED = 3

STATUS_EXIT = {
    _solver.CONVERGED: EXIT_OK,
    _solver.MAX_ITERS: EXIT_MAX_ITERS,
    _solver.ILL_CONDITIONED: EXIT_MAX_ITERS,
    _solver.DIVERGED: EXIT_DIVERGED,
}

TRAJECTORY_HEADER = (
    ["k", "t", "px", "py", "pz", "phi_deg", "theta_deg", "psi_deg"]
    + ["wx", "wy", "wz", "vx", "vy", "vz"]
    + [f"u{i}" for i in range(1, 7)]
    + ["gimbal"]
)
MODE_FILES = {"open_loop": "open", "feedback": "fb"}
SOLUTION_FILE = "solution.npz"


def fmt(x):
    """Shortest text that round-trips at 17 significant digits."""
    return format(float(x) + 0.0, ".17g")


def _angles(R):
    """Euler XYZ degrees and a gimbal flag; degenerate rows use ``phi = 0``."""
    try:
        return euler_xyz(R), 0
    except GimbalLockError:
        theta = np.rad2deg(np.arcsin(np.clip(R[0, 2], -1.0, 1.0)))
        psi = np.rad2deg(np.arctan2(R[1, 0], R[1, 1]))
        return np.array([0.0, theta, psi]), 1


def _write_rows(path, header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def export_trajectory(traj, path):
    """Write a trajectory as CSV; the final row has empty input fields."""
    rows = []
    for k in range(traj.N + 1):
        X = traj.configs[k]
        angles, flag = _angles(X[:3, :3])
        u = [fmt(v) for v in traj.inputs[k]] if k < traj.N else [""] * traj.inputs.shape[1]
        rows.append(
            [str(k), fmt(k * traj.dt)]
            + [fmt(v) for v in X[:3, 3]]
            + [fmt(v) for v in angles]
            + [fmt(v) for v in traj.twists[k]]
            + u
            + [str(flag)]
        )
    _write_rows(path, TRAJECTORY_HEADER, rows)


def _write_npz(path, arrays):
    """Uncompressed ``.npz`` with fixed timestamps so reruns are byte-identical."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name], order="C"), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="")


def _write_convergence(path, records):
    rows = [
        [str(r.outer), str(r.iteration), fmt(r.cost), fmt(r.alpha), fmt(r.rho), fmt(r.max_violation)]
        for r in records
    ]
    _write_rows(path, ["outer", "iteration", "cost", "alpha", "rho", "max_violation"], rows)


def write_solve_outputs(scenario, config, result, out_dir):
    """Write ``summary.json``, ``convergence.csv``, ``trajectory.csv`` and the solution archive."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "scenario": scenario.name,
        "status": result.status,
        "final_cost": result.final_cost,
        "iterations": result.iterations,
        "inner_iterations": result.inner_iterations,
        "outer_iterations": len(result.inner_iterations),
        "max_violation": result.max_violation_history[-1] if result.max_violation_history else 0.0,
        "max_violation_history": result.max_violation_history,
        "jacobian_mode": config.jacobian_mode,
        "discretization": config.discretization,
    }
    _write_json(out / "summary.json", summary)
    _write_convergence(out / "convergence.csv", result.records)
    if result.trajectory is not None:
        traj = result.trajectory
        export_trajectory(traj, out / "trajectory.csv")
        _write_npz(out / SOLUTION_FILE, {
            "configs": traj.configs,
            "twists": traj.twists,
            "inputs": traj.inputs,
            "dt": np.array(traj.dt),
            "gains": result.policy.gains,
            "feedforwards": result.policy.feedforwards,
        })


def run_solve(scenario, out_dir, jacobian=None):
    """Solve a scenario and write its outputs; returns the exit status."""
    config = scenario.solver if jacobian is None else replace(scenario.solver, jacobian_mode=jacobian)
    result = _solver.solve(scenario.problem(), config)
    write_solve_outputs(scenario, config, result, out_dir)
    log.info("%s: %s after %d iterations, cost %.6g", scenario.name, result.status, result.iterations, result.final_cost)
    return STATUS_EXIT[result.status]


def load_solution(directory):
    """Nominal trajectory and policy previously written by :func:`run_solve`."""
    path = Path(directory) / SOLUTION_FILE
    if not path.exists():
        raise FileNotFoundError(f"no nominal solution at {path}; run 'solve' first")
    with np.load(path, allow_pickle=False) as data:
        traj = Trajectory(data["configs"], data["twists"], data["inputs"], float(data["dt"].reshape(-1)[0]))
        policy = _solver.Policy(data["gains"], data["feedforwards"])
    return _solver.SolveResult(traj, policy, [], [], _solver.CONVERGED)


def export_statistics(stats, path):
    rows = []
    for k in range(stats.mean.shape[0]):
        for d in range(stats.mean.shape[1]):
            rows.append([str(k), str(d), fmt(stats.mean[k, d]), fmt(stats.variance[k, d])])
    _write_rows(path, ["k", "dim", "mean", "variance"], rows)


def _update_mc_summary(path, stats: MonteCarloStats, noise, scenario):
    doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    doc[stats.mode] = {
        "samples": stats.sample_count,
        "diverged": stats.diverged,
        "sigma_w": noise.sigma_w,
        "seed": noise.base_seed,
        "terminal_covariance_trace": stats.terminal_trace,
        "terminal_variance": [float(v) for v in stats.variance[-1]],
        "full_state_feedback": scenario.monte_carlo.full_state_feedback,
    }
    if "open_loop" in doc and "feedback" in doc:
        fb, ol = doc["feedback"]["terminal_covariance_trace"], doc["open_loop"]["terminal_covariance_trace"]
        doc["feedback_over_open_loop"] = fb / ol if ol > 0 else None
    _write_json(path, doc)


def run_montecarlo(scenario, solve_outputs, n_samples, mode, out_dir, seed=None):
    """Replay the nominal from ``solve_outputs`` under noise; returns the exit status."""
    try:
        nominal = load_solution(solve_outputs)
    except (FileNotFoundError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    noise = scenario.noise if seed is None else NoiseModel(scenario.noise.sigma_w, seed)
    mc = scenario.monte_carlo
    try:
        stats = monte_carlo(scenario.model, nominal, noise, n_samples, mode, mc.full_state_feedback, mc.current_twist)
    except EmptyStatisticsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_statistics(stats, out / f"mc_{MODE_FILES[stats.mode]}.csv")
    _update_mc_summary(out / "mc_summary.json", stats, noise, scenario)
    log.info("%s: terminal covariance trace %.6g over %d samples", stats.mode, stats.terminal_trace, stats.sample_count)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jacobian", choices=("paper", "numeric"), default=None,
                        help="constraint Jacobians: closed-form rows or finite differences")
    common.add_argument("--seed", type=int, default=None, help="override the scenario noise seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lieddp", description="Constrained DDP on SE(3).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a scenario file")
    p.add_argument("scenario")

    p = sub.add_parser("solve", parents=[common], help="optimize a trajectory")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("mc", parents=[common], help="Monte-Carlo replay of a solved trajectory")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--mode", choices=("open", "fb"), required=True)
    p.add_argument("--nominal", default=None, help="directory with solve outputs (default: the output directory)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        scenario = load_scenario(resolve_scenario(args.scenario))
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.command == "validate":
        print(f"{scenario.name}: ok (N={scenario.N}, dt={scenario.dt:g}, {len(scenario.constraints)} constraints)")
        return EXIT_OK
    try:
        if args.command == "solve":
            return run_solve(scenario, args.out, args.jacobian)
        samples = args.samples if args.samples is not None else scenario.monte_carlo.samples
        if samples < 2:
            print("error: --samples must be at least 2", file=sys.stderr)
            return EXIT_IO
        nominal = args.nominal if args.nominal is not None else args.out
        return run_montecarlo(scenario, nominal, samples, args.mode, args.out, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

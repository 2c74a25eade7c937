"""Command-line surface.

Subcommands: simulate, solve, plan, crb, mc. Exit codes: 0 success,
2 input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import slam
from .errors import INPUT_ERRORS, NUMERIC_ERRORS, NotConverged, SchemaError
from .fim import InfoState, accumulate, crb_trace, initial_info, step_contribution
from .iofiles import (RunConfig, export_results, parse_run_config,
                      read_measurement_log)
from .mission import monte_carlo, run_mission, straight_line_path
from .planner import PlannerState, next_waypoint


def _load_config(path: str) -> RunConfig:
    with open(path) as f:
        return parse_run_config(f.read())


def _slam_cfg(rc: RunConfig) -> slam.SlamConfig:
    s = rc.scenario
    opts = {k: v for k, v in rc.solver.items() if k not in ("solve_every", "eps_prior")}
    return slam.SlamConfig(sigma_gps=s.sigma_gps,
                           sigma_tau=opts.pop("sigma_tau", s.toa_noise.sigma0),
                           noise_model=s.toa_noise, **opts)


def _mission_kwargs(rc: RunConfig, args) -> dict:
    kw = {"toa_path": args.toa,
          "solve_every": rc.solver.get("solve_every", 1),
          "eps_prior": rc.solver.get("eps_prior", 1e-6),
          "slam_cfg": _slam_cfg(rc),
          "planner_headings": rc.planner.get("headings", 8)}
    if args.seed is not None:
        kw["seed"] = args.seed
    return kw


def _emit(payload: dict, as_json: bool):
    if as_json:
        print(json.dumps(payload, indent=2))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def _cmd_simulate(args) -> int:
    rc = _load_config(args.scenario)
    mode = "greedy" if args.mode == "greedy" else straight_line_path(rc.scenario)
    result = run_mission(rc.scenario, mode, **_mission_kwargs(rc, args))
    files = export_results(result, rc.scenario, args.out)
    _emit({
        "user_rmse_m": result.metrics.user_rmse,
        "user_abs_errors_m": list(result.metrics.user_abs_errors),
        "uav_rmse_est_m": result.metrics.uav_rmse_est,
        "uav_rmse_gps_m": result.metrics.uav_rmse_gps,
        "final_crb_trace_m2": float(result.crb_history[-1]),
        "converged": result.converged,
        "files": files,
    }, args.json)
    return 0


def _cmd_solve(args) -> int:
    rc = _load_config(args.scenario)
    with open(args.log) as f:
        samples = read_measurement_log(f.read())
    if not samples:
        raise SchemaError("measurement log contains no rows")
    cfg = _slam_cfg(rc)
    from .channel import RngStream
    rng = RngStream(args.seed if args.seed is not None else rc.scenario.seed)
    init = slam.initial_state(samples, rng)
    state, report = slam.solve_slam(init, samples, cfg)
    problem = slam.build_problem(samples)
    payload = {
        "converged": report.converged,
        "iterations": report.iterations,
        "final_objective": report.objective_trace[-1],
        "users": {str(uid): list(map(float, state.users[j]))
                  for j, uid in enumerate(problem.user_ids)},
        "uav_steps": list(problem.steps),
    }
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "solution.json"), "w") as f:
            json.dump(payload | {
                "uav": {str(st): list(map(float, state.uav[i]))
                        for i, st in enumerate(problem.steps)},
            }, f, indent=2)
    _emit(payload, args.json)
    return 0


def _cmd_plan(args) -> int:
    rc = _load_config(args.scenario)
    s = rc.scenario
    with open(args.state) as f:
        doc = json.load(f)
    fim = np.asarray(doc["fim"], dtype=float)
    info = InfoState(step=int(doc["step"]), fim=fim,
                     eps_prior=float(doc.get("eps_prior", 1e-6)))
    st = PlannerState(step=int(doc["step"]),
                      pos=np.asarray(doc["pos"], dtype=float),
                      terminal=s.uav_terminal.as_array(),
                      mission_steps=s.mission_steps, d_max=s.d_max, info=info,
                      user_estimates=np.asarray(doc["user_estimates"], dtype=float),
                      noise_model=s.toa_noise,
                      headings=rc.planner.get("headings", 8))
    wp = next_waypoint(st)
    _emit({"next_waypoint": [float(v) for v in wp]}, args.json)
    return 0


def _read_xyz_csv(path: str, header: list[str]) -> np.ndarray:
    with open(path) as f:
        reader = csv.reader(io.StringIO(f.read()))
        got = next(reader, None)
        if got != header:
            raise SchemaError(f"header must be exactly {','.join(header)}")
        return np.array([[float(v) for v in row] for row in reader if row])


def _cmd_crb(args) -> int:
    rc = _load_config(args.scenario)
    traj = _read_xyz_csv(args.trajectory, ["step", "x", "y", "z"])
    users = _read_xyz_csv(args.users, ["user_id", "x", "y"])
    info = initial_info(len(users), eps_prior=rc.solver.get("eps_prior", 1e-6))
    history = []
    for row in traj:
        info = accumulate(info, step_contribution(row[1:], users[:, 1:],
                                                  rc.scenario.toa_noise))
        history.append(crb_trace(info))
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "crb_history.csv")
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["step", "crb_trace_m2"])
            for n, v in enumerate(history, start=1):
                w.writerow([n, repr(float(v))])
        _emit({"crb_history_file": path, "final_crb_trace_m2": history[-1]}, args.json)
    else:
        _emit({"crb_history_m2": history}, args.json)
    return 0


def _cmd_mc(args) -> int:
    rc = _load_config(args.scenario)
    mode = "greedy" if args.mode == "greedy" else straight_line_path(rc.scenario)
    kw = _mission_kwargs(rc, args)
    kw.pop("seed", None)  # per-run seeds derive from the scenario seed
    summary = monte_carlo(rc.scenario, mode, runs=args.runs, **kw)
    _emit({"runs": summary.runs, "stats": summary.stats}, args.json)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavloc",
                                description="UAV-aided user localization simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        if out_required is not None:
            sp.add_argument("--out", required=out_required, default=None,
                            help="output directory")

    sp = sub.add_parser("simulate", help="run one mission and export results")
    common(sp, out_required=True)
    sp.add_argument("--mode", choices=["greedy", "fixed"], default="greedy",
                    help="'fixed' flies the straight start-terminal line")
    sp.add_argument("--toa", choices=["ideal", "nr"], default="ideal")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("solve", help="SLAM estimate from a measurement log")
    common(sp)
    sp.add_argument("--log", required=True, help="measurement log CSV")
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("plan", help="next waypoint from a planner state JSON")
    common(sp, out_required=None)
    sp.add_argument("--state", required=True,
                    help="JSON with step, pos, fim, user_estimates")
    sp.set_defaults(func=_cmd_plan)

    sp = sub.add_parser("crb", help="CRB trace history for a trajectory")
    common(sp)
    sp.add_argument("--trajectory", required=True, help="CSV: step,x,y,z")
    sp.add_argument("--users", required=True, help="CSV: user_id,x,y")
    sp.set_defaults(func=_cmd_crb)

    sp = sub.add_parser("mc", help="Monte Carlo batch of missions")
    common(sp, out_required=None)
    sp.add_argument("--runs", type=int, required=True)
    sp.add_argument("--mode", choices=["greedy", "fixed"], default="greedy")
    sp.add_argument("--toa", choices=["ideal", "nr"], default="ideal")
    sp.set_defaults(func=_cmd_mc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if isinstance(exc, NotConverged) and exc.report is not None:
            print(f"iterations: {exc.report.iterations}, "
                  f"last step norm: {exc.report.final_step_norm:.3e}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

"""Scenario runner and benchmark harness.

Subcommands::

    roleengine negotiate <scenario.yaml>   feasibility report + debug renders
    roleengine plan <scenario.yaml>        Q matrix, assignment, initial roles
    roleengine simulate <scenario.yaml>    role-playing trace + metrics
    roleengine bench <suite.yaml>          per-mode aggregate comparison
    roleengine bundle [out_dir]            write the bundled maps/scenarios

Exit codes: 0 success, 2 parse error, 3 infeasible scenario, 4 solver
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import assignment as asg
from . import engine, gp, render, worlds
from . import role_playing as rp
from .scenario_io import (ScenarioParseError, Suite, load_scenario,
                          load_suite, parse_modes)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

METRICS_COLUMNS = ["scenario", "mode", "feasible", "total_cost",
                   "iterations_mean", "min_dist", "avg_jerk",
                   "collision_frames"]


def _mode_overrides(args) -> dict:
    out = {}
    if args.mode_init:
        out["init"] = args.mode_init
    if args.mode_assign:
        out["assign"] = args.mode_assign
    if args.mode_sharing:
        out["sharing"] = args.mode_sharing
    return out


def _load(args):
    scenario = load_scenario(args.scenario, sigma_obs=args.sigma_obs,
                             seed=args.seed)
    overrides = _mode_overrides(args)
    if overrides:
        base = {"init": scenario.modes.init, "assign": scenario.modes.assign,
                "sharing": scenario.modes.sharing}
        base.update(overrides)
        scenario.modes = parse_modes(base, "<cli>")
    return scenario


def _out_dir(args, scenario_name: str) -> Path:
    out = Path(args.out_dir or f"out/{scenario_name}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def trajectory_feasible(role: gp.ProcessRole,
                        dilated: "engine.OccupancyGrid") -> bool:
    """True when no support state's center touches a dilated obstacle."""
    return not any(dilated.is_occupied(p) for p in role.positions())


def cmd_negotiate(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario.name)
    negotiation = engine.role_negotiation(scenario)
    report = {
        "feasible": negotiation.feasibility,
        "uncovered_roles": negotiation.uncovered_roles,
        "robot_types": sorted(negotiation.envs),
    }
    (out / "negotiation.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    for type_id, env in negotiation.envs.items():
        (out / f"emap_{type_id}.txt").write_text(env.emap.export_text())
        (out / f"emap_{type_id}.svg").write_text(
            render.render_emap(env.dilated, env.emap))
        (out / f"sdf_{type_id}.svg").write_text(render.render_sdf(env.sdf))
    print(f"feasible: {negotiation.feasibility}")
    if negotiation.uncovered_roles:
        print("uncoverable roles: " + ", ".join(negotiation.uncovered_roles))
    if args.validate_schemas:
        _validate_json(out / "negotiation.json", ["feasible",
                                                  "uncovered_roles"])
        print("schemas: ok")
    return EXIT_OK if negotiation.feasibility else EXIT_INFEASIBLE


def _plan(scenario):
    negotiation = engine.role_negotiation(scenario)
    if not negotiation.feasibility:
        return negotiation, None, None
    qm, chosen = engine.evaluate_and_assign(scenario, negotiation)
    return negotiation, qm, chosen


def cmd_plan(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario.name)
    try:
        negotiation, qm, chosen = _plan(scenario)
    except asg.InfeasibleAssignmentError as exc:
        (out / "plan_report.json").write_text(json.dumps(
            {"feasible": False, "reason": str(exc)}, indent=2) + "\n")
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if qm is None:
        (out / "plan_report.json").write_text(json.dumps(
            {"feasible": False,
             "uncovered_roles": negotiation.uncovered_roles},
            indent=2) + "\n")
        print("infeasible: uncoverable roles "
              + ",".join(negotiation.uncovered_roles), file=sys.stderr)
        return EXIT_INFEASIBLE

    (out / "q_matrix.csv").write_text(qm.to_csv())
    (out / "assignment.csv").write_text(chosen.to_csv(qm))
    trajectories = []
    sources = [start for _a, _r, start in scenario.agents]
    radii = [robot.radius for _a, robot, _s in scenario.agents]
    dests = [dest for _r, dest in scenario.roles]
    for agent_id, role_id in chosen.pairs():
        role = qm.optimized_roles[(agent_id, role_id)]
        (out / f"role_{agent_id}.csv").write_text(role.to_csv())
        trajectories.append(role.positions())
    (out / "plan.svg").write_text(render.render_scene(
        scenario.grid, sources, dests, trajectories, radii))
    print(f"assignment total cost: {chosen.total_cost:.9g}")
    if args.validate_schemas:
        _validate_csv(out / "assignment.csv", ["agent_id", "role_id", "cost"])
        _validate_q_csv(out / "q_matrix.csv", qm.m, qm.n)
        print("schemas: ok")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario.name)
    try:
        result = engine.run_central(scenario, total_steps=args.steps)
    except gp.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    (out / "run_report.json").write_text(result.report_json())
    if not result.feasible and result.trace is None:
        print(f"infeasible: {result.abort_reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    (out / "trace.csv").write_text(result.trace.to_csv())
    row = _metrics_row(scenario.name, _mode_label(scenario.modes), result)
    (out / "metrics.csv").write_text(_metrics_csv([row]))
    executed = [result.trace.states[:, i, :2]
                for i in range(len(result.trace.agent_ids))]
    (out / "simulation.svg").write_text(render.render_scene(
        scenario.grid, [s for _a, _r, s in scenario.agents],
        [d for _r, d in scenario.roles], executed,
        [robot.radius for _a, robot, _s in scenario.agents]))
    m = result.metrics
    print(f"min distance: {m['min_inter_robot_distance']:.4f} m, "
          f"avg jerk: {m['avg_jerk']:.6f}, "
          f"collision frames: {m['collision_frames']}")
    if args.validate_schemas:
        _validate_csv(out / "trace.csv",
                      ["step", "agent_id", "x", "y", "vx", "vy",
                       "published_version"])
        _validate_csv(out / "metrics.csv", METRICS_COLUMNS)
        print("schemas: ok")
    if not result.feasible:
        print(f"aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _mode_label(modes) -> str:
    return f"{modes.init}/{modes.assign}/{modes.sharing}"


def _metrics_row(name, mode, result) -> dict:
    m = result.metrics or {}
    qm = result.qualification
    iters = []
    if qm is not None and result.assignment is not None:
        for a, r in result.assignment.pairs():
            iters.append(qm.iterations.get((a, r), 0))
    return {
        "scenario": name,
        "mode": mode,
        "feasible": int(result.feasible),
        "total_cost": (result.assignment.total_cost
                       if result.assignment else float("inf")),
        "iterations_mean": float(np.mean(iters)) if iters else 0.0,
        "min_dist": m.get("min_inter_robot_distance", float("nan")),
        "avg_jerk": m.get("avg_jerk", float("nan")),
        "collision_frames": m.get("collision_frames", -1),
    }


def _metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRICS_COLUMNS,
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def run_bench_cell(scenario_path, modes, sigma: float, seed: int,
                   simulate: bool = False, _cache: dict | None = None) -> dict:
    """One suite cell: plan (and optionally simulate) a scenario under
    overridden modes and sigma_obs, returning a metrics row.

    ``_cache`` (shared across cells of a suite) memoizes negotiation and
    the qualification matrix, which depend on the init mode and sigma but
    not on the assignment or sharing mode.
    """
    scenario = load_scenario(scenario_path, sigma_obs=sigma, modes=modes,
                             seed=seed)
    name = f"{scenario.name}/sigma={sigma:g}"
    mode = _mode_label(modes)
    key = (str(scenario_path), modes.init, sigma)
    if _cache is not None and key in _cache:
        negotiation, qm = _cache[key]
    else:
        negotiation = engine.role_negotiation(scenario)
        qm = None
        if negotiation.feasibility:
            hyper = scenario.hyper
            qm = asg.evaluate_qualifications(
                scenario.agents, scenario.roles,
                {tid: env.sdf for tid, env in negotiation.envs.items()},
                negotiation.init_paths, hyper.lam, hyper.qc * np.eye(2),
                hyper.solver, hyper.sigma_limit)
        if _cache is not None:
            _cache[key] = (negotiation, qm)
    chosen = None
    if qm is not None:
        try:
            if scenario.modes.assign == "gra":
                chosen = asg.gra_solve(qm)
            else:
                if scenario.modes.assign == "nn":
                    chosen = asg.nn_assign(
                        {aid: s for aid, _r, s in scenario.agents},
                        {rid: d for rid, d in scenario.roles})
                else:  # fixed
                    pairs = sorted((scenario.fixed_assignment or {}).items())
                    chosen = asg.Assignment([a for a, _r in pairs],
                                            [r for _a, r in pairs], 0.0)
                chosen.total_cost = asg.assignment_cost(chosen, qm)
                if not np.isfinite(chosen.total_cost):
                    chosen = None
        except asg.InfeasibleAssignmentError:
            chosen = None
    if qm is None or chosen is None:
        return {"scenario": name, "mode": mode, "feasible": 0,
                "total_cost": float("inf"), "iterations_mean": 0.0,
                "min_dist": float("nan"), "avg_jerk": float("nan"),
                "collision_frames": -1}
    robots = {aid: robot for aid, robot, _s in scenario.agents}
    feasible = True
    iters = []
    for agent_id, role_id in chosen.pairs():
        role = qm.optimized_roles[(agent_id, role_id)]
        dilated = negotiation.envs[robots[agent_id].type_id].dilated
        if not trajectory_feasible(role, dilated):
            feasible = False
        iters.append(qm.iterations[(agent_id, role_id)])
    row = {
        "scenario": name, "mode": mode, "feasible": int(feasible),
        "total_cost": chosen.total_cost,
        "iterations_mean": float(np.mean(iters)),
        "min_dist": float("nan"), "avg_jerk": float("nan"),
        "collision_frames": -1,
    }
    if simulate and feasible:
        result = engine.run_central(scenario)
        if result.metrics:
            row["min_dist"] = result.metrics["min_inter_robot_distance"]
            row["avg_jerk"] = result.metrics["avg_jerk"]
            row["collision_frames"] = result.metrics["collision_frames"]
    return row


def aggregate_rows(rows) -> list:
    """Per-mode aggregates over the finite cells (Table-style comparison)."""
    by_mode = {}
    for row in rows:
        by_mode.setdefault(row["mode"], []).append(row)
    out = []
    for mode in sorted(by_mode):
        cells = by_mode[mode]
        feas = [c["feasible"] for c in cells]
        costs = [c["total_cost"] for c in cells
                 if np.isfinite(c["total_cost"]) and c["feasible"]]
        iters = [c["iterations_mean"] for c in cells if c["feasible"]]
        dists = [c["min_dist"] for c in cells
                 if np.isfinite(c["min_dist"])]
        jerks = [c["avg_jerk"] for c in cells if np.isfinite(c["avg_jerk"])]
        out.append({
            "mode": mode,
            "cells": len(cells),
            "feasibility_pct": 100.0 * float(np.mean(feas)),
            "mean_cost": float(np.mean(costs)) if costs else float("inf"),
            "mean_iterations": float(np.mean(iters)) if iters else 0.0,
            "mean_min_dist": float(np.mean(dists)) if dists else float("nan"),
            "mean_avg_jerk": float(np.mean(jerks)) if jerks else float("nan"),
        })
    return out


def run_suite(suite: Suite, seed: int = 0, simulate: bool = False):
    rows = []
    cache = {}
    for modes in suite.modes:
        for scenario_path in suite.scenario_paths:
            for sigma in suite.sigma_obs:
                rows.append(run_bench_cell(scenario_path, modes, sigma, seed,
                                           simulate, _cache=cache))
    return rows, aggregate_rows(rows)


def cmd_bench(args) -> int:
    suite = load_suite(args.suite)
    out = Path(args.out_dir or f"out/bench_{suite.name}")
    out.mkdir(parents=True, exist_ok=True)
    rows, aggregates = run_suite(suite, seed=args.seed or 0,
                                 simulate=args.simulate)
    (out / "cells.csv").write_text(_metrics_csv(rows))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(aggregates[0].keys()),
                            lineterminator="\n")
    writer.writeheader()
    for agg in aggregates:
        writer.writerow(agg)
    (out / "aggregate.csv").write_text(buf.getvalue())
    for agg in aggregates:
        print(f"{agg['mode']}: feasibility {agg['feasibility_pct']:.1f}%, "
              f"mean cost {agg['mean_cost']:.6g}, "
              f"mean iterations {agg['mean_iterations']:.2f}")
    if args.validate_schemas:
        _validate_csv(out / "cells.csv", METRICS_COLUMNS)
        print("schemas: ok")
    return EXIT_OK


def cmd_bundle(args) -> int:
    out = worlds.write_bundle(args.out_dir or "scenarios")
    print(f"wrote bundle to {out}")
    return EXIT_OK


def _validate_csv(path: Path, columns) -> None:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header != list(columns):
        raise SystemExit(f"schema mismatch in {path}: {header} != {columns}")


def _validate_q_csv(path: Path, m: int, n: int) -> None:
    rows = [r for r in path.read_text().strip().split("\n")]
    if len(rows) != m or any(len(r.split(",")) != n for r in rows):
        raise SystemExit(f"schema mismatch in {path}: expected {m}x{n}")


def _validate_json(path: Path, keys) -> None:
    data = json.loads(path.read_text())
    missing = [k for k in keys if k not in data]
    if missing:
        raise SystemExit(f"schema mismatch in {path}: missing {missing}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roleengine",
        description="Multi-robot role engine: negotiate, plan, simulate, "
                    "benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--mode-init", choices=["emap", "straight"])
        p.add_argument("--mode-assign", choices=["gra", "nn", "fixed"])
        p.add_argument("--mode-sharing",
                       choices=["conflict_field", "last_position",
                                "pairwise_factor", "none"])
        p.add_argument("--sigma-obs", type=float, default=None)
        p.add_argument("--validate-schemas", action="store_true")

    p = sub.add_parser("negotiate", help="feasibility check + debug renders")
    common(p)
    p.set_defaults(func=cmd_negotiate)

    p = sub.add_parser("plan", help="qualification matrix + assignment")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="decentralized role-playing run")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="suite comparison across modes")
    p.add_argument("suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--simulate", action="store_true",
                   help="also run role-playing per cell")
    p.add_argument("--validate-schemas", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bundle", help="write bundled maps and scenarios")
    p.add_argument("out_dir", nargs="?", default=None)
    p.set_defaults(func=cmd_bundle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except gp.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

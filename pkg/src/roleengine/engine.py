"""Central orchestration: negotiation, assignment hand-off, monitoring.

The engine builds per-robot-type environment representations, gates on
feasibility, evaluates the qualification matrix, assigns roles, launches
the decentralized role-playing phase, and monitors the shared channel for
problems (agent distress, conflict-cost blowups, map changes) that
trigger renegotiation or abort.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import assignment as asg
from . import emap as em
from . import gp
from . import role_playing as rp
from . import skeleton as sk
from .grids import (InputError, OccupancyGrid, RobotType, SignedDistanceField,
                    compute_sdf, dilate_for_robot)

log = logging.getLogger(__name__)


@dataclass
class Hyperparams:
    lam: float = 1.0
    qc: float = 1.0
    n_steps: int = 49
    total_time: float = 10.0
    sigma_c: float = 1e-4
    sigma_limit: float = 1e-2
    sigma_mul: float = 0.05
    horizon: int | None = None
    noise_std: float = 0.0
    solver: gp.SolverParams = field(default_factory=gp.SolverParams)
    conf_blowup: float = 10.0  # Prob() threshold multiplier
    replan_every_step: bool = True


@dataclass
class Modes:
    init: str = "emap"  # emap | straight
    assign: str = "gra"  # gra | nn | fixed
    sharing: str = "conflict_field"  # conflict_field|last_position|pairwise_factor|none


@dataclass
class Scenario:
    grid: OccupancyGrid
    agents: list  # (agent_id, RobotType, start position)
    roles: list  # (role_id, destination position)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    modes: Modes = field(default_factory=Modes)
    seed: int = 0
    name: str = "scenario"
    fixed_assignment: dict | None = None  # agent_id -> role_id

    def __post_init__(self):
        if len(self.agents) < len(self.roles):
            raise InputError("agent count must be >= role count")
        extent_x = self.grid.width * self.grid.resolution
        extent_y = self.grid.height * self.grid.resolution
        for _aid, _robot, start in self.agents:
            self._check_pos(start, extent_x, extent_y)
        for _rid, dest in self.roles:
            self._check_pos(dest, extent_x, extent_y)

    @staticmethod
    def _check_pos(pos, ex, ey):
        if not (0 <= pos[0] <= ex and 0 <= pos[1] <= ey):
            raise InputError(f"position {pos} outside grid bounds")

    def robot_types(self) -> dict:
        return {robot.type_id: robot for _aid, robot, _s in self.agents}


@dataclass
class TypeEnv:
    """Per-robot-type environment representation."""

    robot: RobotType
    dilated: OccupancyGrid
    sdf: SignedDistanceField
    skeleton: np.ndarray
    emap: em.EMapGraph


@dataclass
class NegotiationResult:
    feasibility: bool
    envs: dict  # type_id -> TypeEnv
    init_paths: dict  # (agent_id, role_id) -> InitialPath or None
    uncovered_roles: list


def build_type_env(grid: OccupancyGrid, robot: RobotType) -> TypeEnv:
    dilated = dilate_for_robot(grid, robot)
    sdf = compute_sdf(grid)
    skel = sk.destair(sk.skeletonize(dilated))
    emap = em.extract_feature_nodes(skel, grid.resolution)
    return TypeEnv(robot, dilated, sdf, skel, emap)


def role_negotiation(scenario: Scenario) -> NegotiationResult:
    """Build per-type environments and initial paths; gate on feasibility.

    A role is uncoverable when no agent has any initial path to it; any
    uncoverable role makes the scenario infeasible.
    """
    envs = {}
    for type_id, robot in scenario.robot_types().items():
        envs[type_id] = build_type_env(scenario.grid, robot)

    init_paths = {}
    for agent_id, robot, start in scenario.agents:
        env = envs[robot.type_id]
        for role_id, dest in scenario.roles:
            path = _initial_path(scenario, env, start, dest, agent_id,
                                 role_id)
            init_paths[(agent_id, role_id)] = path

    uncovered = [
        role_id for role_id, _dest in scenario.roles
        if all(init_paths[(agent_id, role_id)] is None
               for agent_id, _r, _s in scenario.agents)
    ]
    return NegotiationResult(not uncovered, envs, init_paths, uncovered)


def _initial_path(scenario, env: TypeEnv, start, dest, agent_id, role_id):
    hyper = scenario.hyper
    if env.dilated.is_occupied(start) or env.dilated.is_occupied(dest):
        return None
    if scenario.modes.init == "straight":
        waypoints = [np.asarray(start, float), np.asarray(dest, float)]
    else:
        aux = em.find_aux_nodes(env.emap, env.dilated, start, dest)
        if aux is None:
            return None
        waypoints = em.reduce_nodes(aux, env.dilated, start, dest)
    return em.make_init_path(waypoints, start, dest, hyper.n_steps,
                             hyper.total_time, agent_id, role_id)


class AbortError(RuntimeError):
    """Structured abort: infeasible scenario or failed renegotiation."""

    def __init__(self, reason: str, uncovered_roles=()):
        super().__init__(reason)
        self.reason = reason
        self.uncovered_roles = list(uncovered_roles)


def evaluate_and_assign(scenario: Scenario, negotiation: NegotiationResult):
    """Qualification matrix plus the chosen assignment mode's matching."""
    hyper = scenario.hyper
    sdfs = {tid: env.sdf for tid, env in negotiation.envs.items()}
    qm = asg.evaluate_qualifications(
        scenario.agents, scenario.roles, sdfs, negotiation.init_paths,
        hyper.lam, hyper.qc * np.eye(2), hyper.solver, hyper.sigma_limit)
    if scenario.modes.assign == "fixed":
        if not scenario.fixed_assignment:
            raise InputError("fixed assignment mode requires per-agent roles")
        pairs = sorted(scenario.fixed_assignment.items())
        chosen = asg.Assignment([a for a, _r in pairs], [r for _a, r in pairs],
                                0.0)
        chosen.total_cost = asg.assignment_cost(chosen, qm)
        if not np.isfinite(chosen.total_cost):
            raise asg.InfeasibleAssignmentError(
                "fixed assignment contains an infeasible pair")
        return qm, chosen
    if scenario.modes.assign == "nn":
        chosen = asg.nn_assign(
            {aid: start for aid, _r, start in scenario.agents},
            {rid: dest for rid, dest in scenario.roles})
        chosen.total_cost = asg.assignment_cost(chosen, qm)
        if not np.isfinite(chosen.total_cost):
            raise asg.InfeasibleAssignmentError(
                "nearest-neighbor matching contains an infeasible pair")
    else:
        chosen = asg.gra_solve(qm)
    return qm, chosen


def detect_problem(snapshot: dict, agents, envs: dict, hyper: Hyperparams,
                   publish_costs: dict, map_changed: bool) -> str:
    """Monitor rule: replan on distress, conflict-cost blowup, or map change."""
    if map_changed:
        return "replan"
    for agent in agents:
        if agent.distressed:
            return "replan"
    for agent in agents:
        entry = snapshot.get(agent.agent_id)
        if entry is None:
            continue
        base = publish_costs.get(agent.agent_id, 0.0)
        current = gp.conf_cost(entry.role, agent.sdf, agent.robot)
        if current > hyper.conf_blowup * max(base, 1e-3):
            return "replan"
    return "none"


@dataclass
class RunResult:
    feasible: bool
    assignment: asg.Assignment | None
    qualification: asg.QualificationMatrix | None
    initial_roles: dict  # agent_id -> ProcessRole from GRA
    trace: rp.SimulationTrace | None
    metrics: dict | None
    replans: int = 0
    abort_reason: str | None = None
    uncovered_roles: list = field(default_factory=list)

    def report(self) -> dict:
        rep = {
            "feasible": self.feasible,
            "replans": self.replans,
            "abort_reason": self.abort_reason,
            "uncovered_roles": self.uncovered_roles,
        }
        if self.assignment is not None:
            rep["assignment"] = [
                {"agent_id": a, "role_id": r}
                for a, r in self.assignment.pairs()
            ]
            rep["total_cost"] = self.assignment.total_cost
        if self.trace is not None and self.metrics is not None:
            rep["per_agent_final_cost"] = self.metrics["per_agent_cost"]
            rep["min_inter_robot_distance"] = \
                self.metrics["min_inter_robot_distance"]
            rep["avg_jerk"] = self.metrics["avg_jerk"]
            rep["collision_frames"] = self.metrics["collision_frames"]
        return rep

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True) + "\n"


def _launch_agents(scenario: Scenario, negotiation, qm, chosen,
                   channel: rp.SharedChannel):
    hyper = scenario.hyper
    robots = {aid: robot for aid, robot, _s in scenario.agents}
    agents = []
    initial_roles = {}
    for agent_id, role_id in chosen.pairs():
        role = qm.optimized_roles.get((agent_id, role_id))
        if role is None:
            raise AbortError(f"no optimized role for ({agent_id}, {role_id})",
                             [role_id])
        robot = robots[agent_id]
        env = negotiation.envs[robot.type_id]
        runtime = rp.AgentRuntime(
            agent_id=agent_id, robot=robot, role=role.copy(), sdf=env.sdf,
            qc=hyper.qc * np.eye(2), params=hyper.solver,
            sharing=scenario.modes.sharing, horizon=hyper.horizon,
            noise_std=hyper.noise_std, sigma_limit=hyper.sigma_limit,
            sigma_mul=hyper.sigma_mul,
            replan_every_step=hyper.replan_every_step,
            rng=np.random.default_rng(scenario.seed + len(agents)))
        channel.publish(agent_id, role, 0)
        agents.append(runtime)
        initial_roles[agent_id] = role.copy()
    return agents, initial_roles


def run_central(scenario: Scenario, total_steps: int | None = None,
                map_events: dict | None = None,
                max_replans: int = 3) -> RunResult:
    """Full pipeline: negotiate, assign, launch, monitor, return artifacts.

    ``map_events`` maps a step index to a replacement OccupancyGrid,
    injected through the channel mid-run (dynamic environment).
    """
    negotiation = role_negotiation(scenario)
    if not negotiation.feasibility:
        return RunResult(False, None, None, {}, None, None,
                         abort_reason="infeasible roles",
                         uncovered_roles=negotiation.uncovered_roles)
    try:
        qm, chosen = evaluate_and_assign(scenario, negotiation)
    except asg.InfeasibleAssignmentError as exc:
        return RunResult(False, None, None, {}, None, None,
                         abort_reason=str(exc))

    channel = rp.SharedChannel()
    channel.publish_env(scenario.grid)
    agents, initial_roles = _launch_agents(scenario, negotiation, qm, chosen,
                                           channel)
    other_radii = {aid: robot.radius for aid, robot, _s in scenario.agents}
    hyper = scenario.hyper
    if total_steps is None:
        total_steps = hyper.n_steps
    publish_costs = {
        a.agent_id: gp.conf_cost(a.role, a.sdf, a.robot) for a in agents
    }

    frames = [np.array([a.role.states[0] for a in agents])]
    versions = [np.zeros(len(agents), dtype=np.int64)]
    replans = 0
    env_version_seen = channel.env_version
    current = scenario
    step = 0
    while step < total_steps:
        step += 1
        if map_events and step in map_events:
            channel.publish_env(map_events[step])
        snapshot, new_grid, env_version = channel.subscribe()
        map_changed = env_version != env_version_seen
        env_version_seen = env_version
        problem = detect_problem(snapshot, agents, negotiation.envs, hyper,
                                 publish_costs, map_changed)
        if problem == "replan":
            if replans >= max_replans:
                return _abort_result(chosen, qm, initial_roles, frames,
                                     versions, agents, other_radii, replans,
                                     "replan limit exceeded")
            grid = new_grid if new_grid is not None else current.grid
            try:
                current, negotiation, qm, chosen, agents = _replan(
                    current, grid, agents, channel)
            except AbortError as exc:
                return _abort_result(chosen, qm, initial_roles, frames,
                                     versions, agents, other_radii, replans,
                                     exc.reason, exc.uncovered_roles)
            replans += 1
            publish_costs = {
                a.agent_id: gp.conf_cost(a.role, a.sdf, a.robot)
                for a in agents
            }
            snapshot, _, _ = channel.subscribe()
        for agent in sorted(agents, key=lambda a: a.agent_id):
            rp.role_play_step(agent, snapshot, channel, other_radii)
        frames.append(np.array([
            a.role.states[min(a.k, a.role.n_states - 1)] for a in agents]))
        snap_after, _, _ = channel.subscribe()
        versions.append(np.array(
            [snap_after[a.agent_id].version for a in agents]))

    trace = rp.SimulationTrace(
        [a.agent_id for a in agents], agents[0].role.dt,
        np.stack(frames), np.stack(versions),
        {a.agent_id: a.role for a in agents})
    mets = rp.metrics(trace, other_radii)
    return RunResult(True, chosen, qm, initial_roles, trace, mets,
                     replans=replans)


def _abort_result(chosen, qm, initial_roles, frames, versions, agents,
                  other_radii, replans, reason, uncovered=()):
    trace = rp.SimulationTrace(
        [a.agent_id for a in agents], agents[0].role.dt if agents else 0.0,
        np.stack(frames), np.stack(versions),
        {a.agent_id: a.role for a in agents})
    mets = rp.metrics(trace, other_radii) if agents else None
    return RunResult(False, chosen, qm, initial_roles, trace, mets,
                     replans=replans, abort_reason=reason,
                     uncovered_roles=list(uncovered))


def replan_scenario(scenario: Scenario, grid: OccupancyGrid,
                    positions: dict) -> Scenario:
    """New scenario with agent starts moved to their current positions."""
    agents = [(aid, robot, np.asarray(positions.get(aid, start), float))
              for aid, robot, start in scenario.agents]
    return replace(scenario, grid=grid, agents=agents)


def _replan(scenario: Scenario, grid: OccupancyGrid, agents, channel):
    """Renegotiate from current positions; raises AbortError when the new
    problem is infeasible (Not_Negotiable)."""
    positions = {
        a.agent_id: a.role.states[min(a.k, a.role.n_states - 1), :2]
        for a in agents
    }
    new_scenario = replan_scenario(scenario, grid, positions)
    negotiation = role_negotiation(new_scenario)
    if not negotiation.feasibility:
        raise AbortError("renegotiation infeasible",
                         negotiation.uncovered_roles)
    try:
        qm, chosen = evaluate_and_assign(new_scenario, negotiation)
    except asg.InfeasibleAssignmentError as exc:
        raise AbortError(f"renegotiation infeasible: {exc}") from exc
    new_agents, _ = _launch_agents(new_scenario, negotiation, qm, chosen,
                                   channel)
    return new_scenario, negotiation, qm, chosen, new_agents

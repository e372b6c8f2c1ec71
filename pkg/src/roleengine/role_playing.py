"""Decentralized role-playing over a shared latest-value channel.

Each simulation step, every agent reads a consistent snapshot of all
published process roles, builds its personal conflict field (the static
SDF lowered by discs stamped at the other agents' predicted positions,
time index by time index), re-solves its remaining trajectory, and
republishes. Within a step all agents read the snapshot taken at the step
boundary (Jacobi update), so the round-robin schedule is order-free and
deterministic.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gp
from ._kernels import stamp_disc
from .grids import OccupancyGrid, RobotType, SignedDistanceField

log = logging.getLogger(__name__)

DISTRESS_LIMIT = 5  # consecutive failed solves before flagging distress


@dataclass
class ChannelEntry:
    version: int
    step: int  # publisher's timestep at publish time
    role: gp.ProcessRole


class SharedChannel:
    """Latest-value store with per-key versions and snapshot reads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, ChannelEntry] = {}
        self._grid: OccupancyGrid | None = None
        self._env_version = 0

    def publish(self, agent_id: str, role: gp.ProcessRole,
                step: int = 0) -> int:
        with self._lock:
            prev = self._entries.get(agent_id)
            version = (prev.version + 1) if prev else 1
            self._entries[agent_id] = ChannelEntry(version, step, role.copy())
            return version

    def publish_env(self, grid: OccupancyGrid) -> int:
        with self._lock:
            self._grid = grid.copy()
            self._env_version += 1
            return self._env_version

    def subscribe(self):
        """Consistent snapshot: copies of all latest entries plus the env."""
        with self._lock:
            entries = {
                aid: ChannelEntry(e.version, e.step, e.role.copy())
                for aid, e in self._entries.items()
            }
            grid = self._grid.copy() if self._grid is not None else None
            return entries, grid, self._env_version

    @property
    def env_version(self) -> int:
        with self._lock:
            return self._env_version


class ConflictField:
    """Per-agent, per-timestep distance fields, lazily copied on stamp."""

    def __init__(self, static_sdf: SignedDistanceField):
        self.static = static_sdf
        self._per_step: dict[int, SignedDistanceField] = {}

    def stamp(self, t: int, center, stamp_radius: float, band: float) -> None:
        fld = self._per_step.get(t)
        if fld is None:
            fld = SignedDistanceField(self.static.values.copy(),
                                      self.static.resolution)
            self._per_step[t] = fld
        stamp_disc(fld.values, float(center[0]), float(center[1]),
                   stamp_radius, fld.resolution, band)

    def field_for(self, t: int) -> SignedDistanceField:
        return self._per_step.get(t, self.static)

    def sample(self, t: int, pts):
        return self.field_for(t).sample(pts)


def make_conflict_field(snapshot: dict, agent_id: str,
                        static_sdf: SignedDistanceField, robot: RobotType,
                        other_radii: dict, k: int,
                        horizon: int | None = None,
                        n_self: int | None = None) -> ConflictField:
    """Stamp the other agents' predicted positions into agent-local fields.

    For every other agent and every time index ``t`` in the horizon, a
    disc of radius ``r_self + r_other + epsilon_safe`` is min-combined
    into the field for ``t`` (global time indexing: all roles share dt and
    step 0; past the end of another agent's role it parks at its final
    state). Entries published before ``k - horizon`` are stale and
    contribute their last position only, at every index.
    """
    cf = ConflictField(static_sdf)
    band = robot.radius + robot.epsilon_safe + 4 * static_sdf.resolution
    for other_id, entry in snapshot.items():
        if other_id == agent_id:
            continue
        states = entry.role.states
        n_other = states.shape[0] - 1
        stamp_radius = robot.radius + other_radii.get(other_id, 0.0) \
            + robot.epsilon_safe
        end = n_other if n_self is None else max(n_other, n_self)
        if horizon is not None:
            end = min(end, k + horizon)
        stale = horizon is not None and entry.step < k - horizon
        if stale:
            log.warning("stale role for %s (published at step %d, now %d); "
                        "using last position only", other_id, entry.step, k)
        for t in range(k, end + 1):
            pos = states[min(t, n_other), :2] if not stale else states[-1, :2]
            cf.stamp(t, pos, stamp_radius, band)
    return cf


def track_position(role: gp.ProcessRole, k: int, noise_std: float = 0.0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Simulation stand-in for camera tracking: executed position plus
    zero-mean Gaussian noise."""
    pos = role.states[min(k, role.n_states - 1), :2].copy()
    if noise_std > 0.0:
        rng = rng or np.random.default_rng()
        pos += rng.normal(0.0, noise_std, size=2)
    return pos


@dataclass
class AgentRuntime:
    """Mutable per-agent state for the role-playing phase."""

    agent_id: str
    robot: RobotType
    role: gp.ProcessRole
    sdf: SignedDistanceField
    qc: np.ndarray
    params: gp.SolverParams = field(default_factory=gp.SolverParams)
    sharing: str = "conflict_field"  # conflict_field|last_position|pairwise_factor|none
    horizon: int | None = None
    noise_std: float = 0.0
    sigma_limit: float = 1e-2
    sigma_mul: float = 0.05
    replan_every_step: bool = True
    k: int = 0
    distress: int = 0
    mean: np.ndarray = None
    rng: np.random.Generator = None

    def __post_init__(self):
        if self.mean is None:
            self.mean = self.role.states.copy()
        if self.rng is None:
            self.rng = np.random.default_rng(0)
        self.qc = np.asarray(self.qc, dtype=np.float64)

    @property
    def distressed(self) -> bool:
        return self.distress >= DISTRESS_LIMIT

    @property
    def done(self) -> bool:
        return self.k >= self.role.n_states - 1


def _sharing_factors(agent: AgentRuntime, snapshot: dict, other_radii: dict):
    """Obstacle-field provider and extra factors for the sharing mode."""
    if agent.sharing == "conflict_field":
        cf = make_conflict_field(snapshot, agent.agent_id, agent.sdf,
                                 agent.robot, other_radii, agent.k,
                                 agent.horizon, agent.role.n_states - 1)
        return cf.field_for, []
    if agent.sharing == "last_position":
        fld = SignedDistanceField(agent.sdf.values.copy(),
                                  agent.sdf.resolution)
        band = agent.robot.radius + agent.robot.epsilon_safe \
            + 4 * agent.sdf.resolution
        for other_id, entry in snapshot.items():
            if other_id == agent.agent_id:
                continue
            pos = entry.role.states[min(entry.step,
                                        entry.role.n_states - 1), :2]
            stamp_radius = agent.robot.radius \
                + other_radii.get(other_id, 0.0) + agent.robot.epsilon_safe
            stamp_disc(fld.values, float(pos[0]), float(pos[1]),
                       stamp_radius, fld.resolution, band)
        return (lambda t: fld), []
    if agent.sharing == "pairwise_factor":
        extra = []
        n = agent.role.n_states - 1
        for other_id, entry in snapshot.items():
            if other_id == agent.agent_id:
                continue
            states = entry.role.states
            n_other = states.shape[0] - 1
            r_sum = agent.robot.radius + other_radii.get(other_id, 0.0)
            for t in range(agent.k, n + 1):
                extra.append(gp.PairwiseConflictFactor(
                    t, states[min(t, n_other), :2], r_sum,
                    agent.robot.epsilon_safe, agent.sigma_mul))
        return None, extra
    return None, []


def role_play_step(agent: AgentRuntime, snapshot: dict,
                   channel: SharedChannel, other_radii: dict) -> int:
    """One Algorithm-4 iteration: subscribe, build conflicts, re-solve the
    remaining trajectory, publish, advance. Returns the published version."""
    if agent.done:
        agent.k = agent.role.n_states - 1
        return channel.publish(agent.agent_id, agent.role, agent.k)
    k = agent.k
    field_fn, extra = _sharing_factors(agent, snapshot, other_radii)
    tracked = track_position(agent.role, k, agent.noise_std, agent.rng)

    n = agent.role.n_states - 1
    prior = gp.GPPriorSpec(agent.qc, agent.role.dt, agent.mean)
    phi = gp.transition(agent.role.dt)
    factors = []
    for t in range(max(0, k - 1), n):
        bias = agent.mean[t + 1] - phi @ agent.mean[t]
        factors.append(gp.GPPriorFactor(t, agent.role.dt, prior.qc, bias))
    factors.append(gp.FixStateFactor(k, tracked, 1e-4, dims=(0, 1)))
    factors.append(gp.FixStateFactor(n, agent.mean[n], 1e-4))
    for t in range(k, n + 1):
        fld = field_fn(t) if field_fn else agent.sdf
        factors.append(gp.ObstacleFactor(t, fld, agent.robot))
        factors.append(gp.VelocityLimitFactor(t, agent.robot.v_max,
                                              agent.sigma_limit))
    factors.extend(extra)

    try:
        if agent.replan_every_step or k == 0:
            result = gp.solve_lm(factors, agent.role, agent.params,
                                 free_start=k)
            agent.role = result.role
        agent.distress = 0
    except gp.SolverError as exc:
        agent.distress += 1
        log.warning("agent %s solve failed at step %d: %s",
                    agent.agent_id, k, exc)
    version = channel.publish(agent.agent_id, agent.role, k)
    agent.k = k + 1
    return version


@dataclass
class SimulationTrace:
    """Executed states and published versions, one frame per step."""

    agent_ids: list
    dt: float
    states: np.ndarray  # (frames, n_agents, 4)
    versions: np.ndarray  # (frames, n_agents)
    roles: dict  # agent_id -> final ProcessRole

    def to_csv(self) -> str:
        lines = ["step,agent_id,x,y,vx,vy,published_version"]
        for s in range(self.states.shape[0]):
            for i, aid in enumerate(self.agent_ids):
                x, y, vx, vy = self.states[s, i]
                lines.append(f"{s},{aid},{x:.9g},{y:.9g},{vx:.9g},{vy:.9g},"
                             f"{int(self.versions[s, i])}")
        return "\n".join(lines) + "\n"


def run_simulation(agents, channel: SharedChannel, total_steps: int,
                   schedule: str = "round_robin", other_radii=None,
                   on_step=None) -> SimulationTrace:
    """Drive all agents for ``total_steps`` steps under a schedule.

    ``round_robin`` is single-threaded and deterministic; ``concurrent``
    runs the agents of each step in a thread pool (same Jacobi snapshot,
    so the safety invariants are preserved, not bit-determinism).
    """
    agents = sorted(agents, key=lambda a: a.agent_id)
    if other_radii is None:
        other_radii = {a.agent_id: a.robot.radius for a in agents}
    n_agents = len(agents)
    frames = np.zeros((total_steps + 1, n_agents, 4))
    versions = np.zeros((total_steps + 1, n_agents), dtype=np.int64)
    for i, agent in enumerate(agents):
        frames[0, i] = agent.role.states[0]

    dt = agents[0].role.dt if agents else 0.0
    for step in range(1, total_steps + 1):
        snapshot, _, _ = channel.subscribe()
        if schedule == "concurrent":
            with ThreadPoolExecutor(max_workers=n_agents) as pool:
                list(pool.map(
                    lambda a: role_play_step(a, snapshot, channel,
                                             other_radii), agents))
        else:
            for agent in agents:
                role_play_step(agent, snapshot, channel, other_radii)
        for i, agent in enumerate(agents):
            idx = min(agent.k, agent.role.n_states - 1)
            frames[step, i] = agent.role.states[idx]
            versions[step, i] = channel.subscribe()[0][agent.agent_id].version
        if on_step is not None:
            on_step(step)
    return SimulationTrace([a.agent_id for a in agents], dt, frames,
                           versions, {a.agent_id: a.role for a in agents})


def metrics(trace: SimulationTrace, radii: dict) -> dict:
    """Safety and smoothness metrics over a trace.

    Jerk is the third-order finite difference of executed positions; a
    collision frame is any frame where some pair's center distance drops
    below the sum of radii.
    """
    if trace.states.size == 0:
        raise ValueError("empty trace")
    pos = trace.states[:, :, :2]
    n_frames, n_agents = pos.shape[0], pos.shape[1]
    min_dist = np.inf
    collision_frames = 0
    for s in range(n_frames):
        collided = False
        for i in range(n_agents):
            for j in range(i + 1, n_agents):
                d = float(np.linalg.norm(pos[s, i] - pos[s, j]))
                min_dist = min(min_dist, d)
                if d < radii[trace.agent_ids[i]] + radii[trace.agent_ids[j]]:
                    collided = True
        if collided:
            collision_frames += 1
    if n_frames >= 4 and trace.dt > 0:
        jerk = np.diff(pos, n=3, axis=0) / trace.dt ** 3
        avg_jerk = float(np.mean(np.linalg.norm(jerk, axis=2)))
    else:
        avg_jerk = 0.0
    per_agent_cost = {aid: float(role.cost)
                      for aid, role in trace.roles.items()}
    return {
        "min_inter_robot_distance": float(min_dist) if n_agents > 1 else float("inf"),
        "avg_jerk": avg_jerk,
        "per_agent_cost": per_agent_cost,
        "collision_frames": collision_frames,
    }

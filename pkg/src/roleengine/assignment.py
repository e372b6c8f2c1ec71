"""Agent-role qualification and optimal group role assignment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import gp
from .grids import InputError

log = logging.getLogger(__name__)


class InfeasibleAssignmentError(RuntimeError):
    """No finite-cost perfect matching covers all roles."""


@dataclass
class QualificationMatrix:
    """m x n cost matrix with the converged role stored per finite pair."""

    agent_ids: list
    role_ids: list
    q: np.ndarray  # (m, n), +inf for infeasible pairs
    optimized_roles: dict = field(default_factory=dict)  # (a, r) -> ProcessRole
    iterations: dict = field(default_factory=dict)  # (a, r) -> LM iterations

    @property
    def m(self) -> int:
        return len(self.agent_ids)

    @property
    def n(self) -> int:
        return len(self.role_ids)

    def to_csv(self) -> str:
        lines = []
        for row in self.q:
            lines.append(",".join(
                "inf" if not np.isfinite(v) else f"{v:.9g}" for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class Assignment:
    """Matching as paired agent/role index vectors."""

    t_r: list  # agent ids
    t_c: list  # role ids
    total_cost: float

    def pairs(self):
        return list(zip(self.t_r, self.t_c))

    def to_csv(self, q: QualificationMatrix | None = None) -> str:
        lines = ["agent_id,role_id,cost"]
        for a, r in self.pairs():
            cost = ""
            if q is not None:
                cost = f"{q.q[q.agent_ids.index(a), q.role_ids.index(r)]:.9g}"
            lines.append(f"{a},{r},{cost}")
        return "\n".join(lines) + "\n"


def convergence(dtheta_norm: float, iteration: int, err: float,
                prev_err: float, params: gp.SolverParams) -> bool:
    """Qualification-loop stop test: small step, small relative error
    decrease, or iteration cap."""
    if iteration >= params.max_iterations:
        return True
    if dtheta_norm < params.step_tol:
        return True
    return (prev_err - err) / max(prev_err, 1e-300) < params.rel_tol


def evaluate_qualifications(agents, roles, sdfs, init_paths, lam: float,
                            qc, params: gp.SolverParams | None = None,
                            sigma_limit: float = 1e-2) -> QualificationMatrix:
    """Optimize a candidate process role per (agent, role) pair.

    ``agents`` is a list of (agent_id, RobotType, start); ``roles`` a list
    of (role_id, destination); ``sdfs`` maps type_id to the static SDF;
    ``init_paths`` maps (agent_id, role_id) to an InitialPath or None.
    Pairs without an initial path, and pairs whose solve fails, get +inf.
    """
    m, n = len(agents), len(roles)
    q = np.full((m, n), np.inf)
    qm = QualificationMatrix([a[0] for a in agents], [r[0] for r in roles], q)
    for i, (agent_id, robot, _start) in enumerate(agents):
        sdf = sdfs[robot.type_id]
        for j, (role_id, _dest) in enumerate(roles):
            init = init_paths.get((agent_id, role_id))
            if init is None:
                continue
            role = gp.ProcessRole(agent_id, role_id, init.states, init.dt)
            prior = gp.GPPriorSpec(qc, init.dt, init.states.copy())
            factors = gp.build_factors(role, prior, sdf, robot,
                                       sigma_limit=sigma_limit)
            try:
                result = gp.solve_lm(factors, role, params)
            except gp.SolverError as exc:
                log.warning("solve failed for (%s, %s): %s",
                            agent_id, role_id, exc)
                continue
            cost = gp.qualification_cost(result.role, init.states, qc, lam,
                                         sdf, robot)
            q[i, j] = cost
            result.role.cost = cost
            qm.optimized_roles[(agent_id, role_id)] = result.role
            qm.iterations[(agent_id, role_id)] = result.iterations
    return qm


def gra_solve(qm: QualificationMatrix) -> Assignment:
    """Minimum-total-cost matching covering every role.

    Rectangular matrices (m > n) are padded with zero-cost dummy roles so
    surplus agents stay unassigned. Raises InfeasibleAssignmentError when
    no finite perfect matching exists.
    """
    if qm.m < qm.n:
        raise InputError("need at least as many agents as roles")
    cost = qm.q
    if qm.m > qm.n:
        pad = np.zeros((qm.m, qm.m - qm.n))
        cost = np.hstack([cost, pad])
    try:
        rows, cols = linear_sum_assignment(cost)
    except ValueError as exc:
        raise InfeasibleAssignmentError(str(exc)) from exc
    t_r, t_c = [], []
    total = 0.0
    for i, j in sorted(zip(rows, cols)):
        if j >= qm.n:
            continue  # dummy role
        if not np.isfinite(qm.q[i, j]):
            raise InfeasibleAssignmentError(
                f"role {qm.role_ids[j]} only reachable at infinite cost")
        t_r.append(qm.agent_ids[i])
        t_c.append(qm.role_ids[j])
        total += float(qm.q[i, j])
    return Assignment(t_r, t_c, total)


def nn_assign(agent_positions: dict, role_positions: dict) -> Assignment:
    """Greedy nearest-neighbor baseline: repeatedly match the globally
    closest unmatched (agent, role) pair until every role is covered."""
    if len(agent_positions) < len(role_positions):
        raise InputError("need at least as many agents as roles")
    agents = list(agent_positions)
    roles = list(role_positions)
    pairs = []
    free_a = set(agents)
    free_r = set(roles)
    dists = sorted(
        (float(np.linalg.norm(np.asarray(agent_positions[a])
                              - np.asarray(role_positions[r]))), a, r)
        for a in agents for r in roles)
    for _, a, r in dists:
        if a in free_a and r in free_r:
            pairs.append((a, r))
            free_a.discard(a)
            free_r.discard(r)
            if not free_r:
                break
    pairs.sort(key=lambda p: agents.index(p[0]))
    return Assignment([p[0] for p in pairs], [p[1] for p in pairs],
                      float("nan"))


def assignment_cost(assignment: Assignment, qm: QualificationMatrix) -> float:
    """Total qualification cost of an arbitrary matching under ``qm``."""
    total = 0.0
    for a, r in assignment.pairs():
        total += float(qm.q[qm.agent_ids.index(a), qm.role_ids.index(r)])
    return total

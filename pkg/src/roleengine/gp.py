"""Process-role trajectories and MAP inference over factor graphs.

A process role is a sequence of N+1 support states [x, y, vx, vy] with a
constant-velocity (white-noise acceleration) prior between consecutive
supports. Likelihood factors (obstacle hinge, state fixes, velocity
limits, pairwise separation) are combined with the prior into a nonlinear
least-squares problem solved by Levenberg-Marquardt.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

STATE_DIM = 4


class SolverError(RuntimeError):
    """Non-finite error or failed linear solve during optimization."""


@dataclass
class ProcessRole:
    """Trajectory of support states for one agent under one role."""

    agent_id: str
    role_id: str
    states: np.ndarray  # (N+1, 4)
    dt: float
    cost: float = float("nan")

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[1] != STATE_DIM:
            raise ValueError("states must be (N+1, 4)")
        if self.states.shape[0] < 2 or self.dt <= 0:
            raise ValueError("need N >= 1 supports and dt > 0")
        if not np.isfinite(self.states).all():
            raise ValueError("states must be finite")

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def velocities(self) -> np.ndarray:
        return self.states[:, 2:]

    def copy(self) -> "ProcessRole":
        return replace(self, states=self.states.copy())

    def to_csv(self) -> str:
        lines = ["agent_id,k,t,x,y,vx,vy"]
        for k, s in enumerate(self.states):
            vals = ",".join(f"{v:.9g}" for v in s)
            lines.append(f"{self.agent_id},{k},{k * self.dt:.9g},{vals}")
        return "\n".join(lines) + "\n"


@dataclass
class GPPriorSpec:
    """Constant-velocity prior: spectral density, step, and mean trajectory."""

    qc: np.ndarray  # (2, 2) SPD
    dt: float
    mean_trajectory: np.ndarray | None = None  # (N+1, 4)

    def __post_init__(self):
        self.qc = np.asarray(self.qc, dtype=np.float64)
        if self.qc.shape == ():
            self.qc = float(self.qc) * np.eye(2)
        if not np.allclose(self.qc, self.qc.T) or \
                np.linalg.eigvalsh(self.qc).min() <= 0:
            raise ValueError("qc must be symmetric positive definite")


@dataclass
class SolverParams:
    max_iterations: int = 100
    rel_tol: float = 1e-4
    step_tol: float = 1e-6
    lm_lambda_init: float = 1e-2
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.rel_tol <= 0:
            raise ValueError("need max_iterations >= 1 and rel_tol > 0")
        if min(self.lm_lambda_init, self.lm_lambda_up,
               self.lm_lambda_down) <= 0:
            raise ValueError("damping scalars must be positive")


def transition(dt: float) -> np.ndarray:
    """Constant-velocity state transition matrix."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    phi = np.eye(4)
    phi[0, 2] = phi[1, 3] = dt
    return phi


def process_noise(dt: float, qc) -> np.ndarray:
    """Covariance accumulated between consecutive supports."""
    if dt <= 0:
        raise ValueError("dt must be positive (Q is singular at dt = 0)")
    qc = np.asarray(qc, dtype=np.float64)
    if qc.shape == ():
        qc = float(qc) * np.eye(2)
    q = np.empty((4, 4))
    q[:2, :2] = dt ** 3 / 3 * qc
    q[:2, 2:] = q[2:, :2] = dt ** 2 / 2 * qc
    q[2:, 2:] = dt * qc
    return q


def hinge_cost(d: float, epsilon: float) -> float:
    """Obstacle cost: linear inside the safety band, zero outside."""
    return -d + epsilon if d <= epsilon else 0.0


class Factor:
    """One term of the objective; contributes 0.5 * ||weighted residual||^2."""

    indices: tuple  # state indices this factor touches

    def linearize(self, states):
        """Return (weighted residual (m,), {state_idx: weighted J (m, 4)})."""
        raise NotImplementedError

    def error(self, states) -> float:
        r, _ = self.linearize(states)
        return 0.5 * float(r @ r)


class GPPriorFactor(Factor):
    """Binary factor between consecutive supports.

    Residual ``(theta_{k+1} - Phi theta_k) - bias`` whitened by the
    inverse process noise; ``bias`` carries the prior-mean increment (zero
    for a pure constant-velocity prior with no control input).
    """

    def __init__(self, k: int, dt: float, qc, bias=None):
        self.indices = (k, k + 1)
        self.phi = transition(dt)
        q_inv = np.linalg.inv(process_noise(dt, qc))
        self.sqrt_w = np.linalg.cholesky(q_inv).T  # upper: U^T U = Q^-1
        self.bias = np.zeros(4) if bias is None else np.asarray(bias, float)

    def raw_residual(self, states) -> np.ndarray:
        k = self.indices[0]
        return states[k + 1] - self.phi @ states[k] - self.bias

    def linearize(self, states):
        k = self.indices[0]
        r = self.sqrt_w @ self.raw_residual(states)
        return r, {k: -self.sqrt_w @ self.phi, k + 1: self.sqrt_w.copy()}


class ObstacleFactor(Factor):
    """Unary hinge factor against a (possibly per-timestep) distance field."""

    def __init__(self, k: int, distance_field, robot, weight=None):
        self.indices = (k,)
        self.field = distance_field
        self.robot = robot
        self.weight = 1.0 / robot.sigma_obs if weight is None else weight

    def linearize(self, states):
        k = self.indices[0]
        pos = states[k, :2]
        vals, grads = self.field.sample(pos)
        d = float(vals[0]) - self.robot.radius
        jac = np.zeros((1, 4))
        if d <= self.robot.epsilon_safe:
            r = (-d + self.robot.epsilon_safe) * self.weight
            jac[0, :2] = -grads[0] * self.weight
        else:
            r = 0.0
        return np.array([r]), {k: jac}


class FixStateFactor(Factor):
    """Tight prior pinning (part of) one support state to a target."""

    def __init__(self, k: int, target, sigma: float = 1e-4, dims=None):
        self.indices = (k,)
        self.target = np.asarray(target, dtype=np.float64)
        self.sigma = sigma
        self.dims = tuple(range(STATE_DIM)) if dims is None else tuple(dims)

    def linearize(self, states):
        k = self.indices[0]
        r = (states[k, list(self.dims)] - self.target) / self.sigma
        jac = np.zeros((len(self.dims), 4))
        for row, d in enumerate(self.dims):
            jac[row, d] = 1.0 / self.sigma
        return r, {k: jac}


class VelocityLimitFactor(Factor):
    """Penalizes speed above the robot's maximum."""

    def __init__(self, k: int, v_max: float, sigma: float = 1e-2):
        self.indices = (k,)
        self.v_max = v_max
        self.sigma = sigma

    def linearize(self, states):
        k = self.indices[0]
        v = states[k, 2:]
        speed = float(np.linalg.norm(v))
        jac = np.zeros((1, 4))
        if speed > self.v_max:
            r = (speed - self.v_max) / self.sigma
            jac[0, 2:] = v / speed / self.sigma
        else:
            r = 0.0
        return np.array([r]), {k: jac}


class PairwiseConflictFactor(Factor):
    """Hinge on center distance to another agent's (fixed) position.

    Used in the pairwise-factor baseline sharing mode: the other agent's
    state at the same time index is taken from the shared channel and held
    constant during this agent's solve.
    """

    def __init__(self, k: int, other_pos, radius_sum: float, epsilon: float,
                 sigma: float = 0.05):
        self.indices = (k,)
        self.other_pos = np.asarray(other_pos, dtype=np.float64)
        self.radius_sum = radius_sum
        self.epsilon = epsilon
        self.sigma = sigma

    def linearize(self, states):
        k = self.indices[0]
        diff = states[k, :2] - self.other_pos
        dist = float(np.linalg.norm(diff))
        direction = diff / dist if dist > 1e-12 else np.array([1.0, 0.0])
        d = dist - self.radius_sum
        jac = np.zeros((1, 4))
        if d <= self.epsilon:
            r = (-d + self.epsilon) / self.sigma
            jac[0, :2] = -direction / self.sigma
        else:
            r = 0.0
        return np.array([r]), {k: jac}


def total_error(factors, states) -> float:
    return sum(f.error(states) for f in factors)


def linearize(factors, states, free_start: int = 0):
    """Stack weighted residuals and Jacobians into a sparse system.

    Returns (A, b) such that 0.5 * ||A d - b||^2 is the Gauss-Newton model
    of the objective in the increment d over states ``free_start..N``.
    Columns for frozen states are dropped (their increments are zero).
    """
    n_states = states.shape[0]
    n_free = n_states - free_start
    rows_i, cols_i, data = [], [], []
    b = []
    row0 = 0
    for f in factors:
        r, blocks = f.linearize(states)
        m = r.shape[0]
        b.append(-r)
        for idx, jac in blocks.items():
            if idx < free_start:
                continue
            col0 = (idx - free_start) * STATE_DIM
            for i in range(m):
                for j in range(STATE_DIM):
                    v = jac[i, j]
                    if v != 0.0:
                        rows_i.append(row0 + i)
                        cols_i.append(col0 + j)
                        data.append(v)
        row0 += m
    a = sp.csr_matrix((data, (rows_i, cols_i)),
                      shape=(row0, n_free * STATE_DIM))
    return a, np.concatenate(b) if b else np.zeros(0)


@dataclass
class SolveResult:
    role: ProcessRole
    iterations: int
    final_error: float
    converged: bool


def solve_lm(factors, init: ProcessRole, params: SolverParams | None = None,
             free_start: int = 0) -> SolveResult:
    """Levenberg-Marquardt over the factor objective.

    Damped steps are accepted only when they decrease the error; damping
    shrinks on accept and grows on reject. Stops on relative error
    decrease below ``rel_tol``, step norm below ``step_tol``, or the
    iteration cap. States before ``free_start`` are frozen.
    """
    params = params or SolverParams()
    states = init.states.copy()
    err = total_error(factors, states)
    if not np.isfinite(err):
        raise SolverError("non-finite initial error")
    lam = params.lm_lambda_init
    iterations = 0
    converged = False
    for _ in range(params.max_iterations):
        a, b = linearize(factors, states, free_start)
        ata = (a.T @ a).tocsc()
        atb = a.T @ b
        n = ata.shape[0]
        accepted = False
        for _retry in range(60):
            try:
                delta = spla.spsolve(ata + lam * sp.identity(n, format="csc"),
                                     atb)
            except RuntimeError as exc:  # singular system
                raise SolverError(f"linear solve failed: {exc}") from exc
            cand = states.copy()
            cand[free_start:] += delta.reshape(-1, STATE_DIM)
            cand_err = total_error(factors, cand)
            if np.isfinite(cand_err) and cand_err <= err:
                accepted = True
                lam /= params.lm_lambda_down
                break
            lam *= params.lm_lambda_up
            if lam > 1e14:
                break
        if not accepted:
            converged = True  # no decreasing step exists at this point
            break
        iterations += 1
        rel_decrease = (err - cand_err) / max(err, 1e-300)
        step_norm = float(np.linalg.norm(delta))
        states = cand
        err = cand_err
        if rel_decrease < params.rel_tol or step_norm < params.step_tol:
            converged = True
            break
    if not np.isfinite(err):
        raise SolverError("non-finite error after optimization")
    role = replace(init, states=states, cost=err)
    return SolveResult(role, iterations, err, converged)


def gp_energy(states: np.ndarray, mean: np.ndarray, dt: float, qc) -> float:
    """Smoothness functional: Mahalanobis deviation from the prior mean
    under the constant-velocity chain (zero at the mean itself)."""
    phi = transition(dt)
    q_inv = np.linalg.inv(process_noise(dt, qc))
    total = 0.0
    for k in range(states.shape[0] - 1):
        bias = mean[k + 1] - phi @ mean[k]
        r = states[k + 1] - phi @ states[k] - bias
        total += 0.5 * float(r @ q_inv @ r)
    return total


def conf_cost(role: ProcessRole, distance_field, robot,
              field_per_step: bool = False) -> float:
    """Arc-length weighted obstacle cost along the trajectory.

    Rectangle-rule discretization: sum of hinge(d - radius) * speed * dt
    over support states. ``distance_field`` is either a single field or,
    when ``field_per_step`` is set, a callable ``k -> field``.
    """
    total = 0.0
    for k in range(role.n_states):
        fld = distance_field(k) if field_per_step else distance_field
        vals, _ = fld.sample(role.states[k, :2])
        d = float(vals[0]) - robot.radius
        c = hinge_cost(d, robot.epsilon_safe)
        if c > 0.0:
            total += c * float(np.linalg.norm(role.states[k, 2:])) * role.dt
    return total


def qualification_cost(role: ProcessRole, mean: np.ndarray, qc, lam: float,
                       distance_field, robot) -> float:
    """Balance of smoothness and conflict: lam * F_gp + F_conf."""
    return (lam * gp_energy(role.states, mean, role.dt, qc)
            + conf_cost(role, distance_field, robot))


def build_factors(init: ProcessRole, prior: GPPriorSpec, distance_field,
                  robot, sigma_fix: float = 1e-4,
                  velocity_limit: bool = True,
                  sigma_limit: float = 1e-2,
                  obstacle_field_fn=None,
                  extra_factors=()):
    """Standard single-agent factor graph for one trajectory.

    Prior chain (mean-relative), endpoint fixes, per-support obstacle
    factors (per-timestep fields via ``obstacle_field_fn``), optional
    velocity limits, plus any extra factors.
    """
    n = init.n_states
    mean = prior.mean_trajectory
    if mean is None:
        mean = init.states
    factors = []
    phi = transition(prior.dt)
    for k in range(n - 1):
        bias = mean[k + 1] - phi @ mean[k]
        factors.append(GPPriorFactor(k, prior.dt, prior.qc, bias))
    factors.append(FixStateFactor(0, init.states[0], sigma_fix))
    factors.append(FixStateFactor(n - 1, init.states[n - 1], sigma_fix))
    for k in range(n):
        fld = obstacle_field_fn(k) if obstacle_field_fn else distance_field
        factors.append(ObstacleFactor(k, fld, robot))
        if velocity_limit:
            factors.append(VelocityLimitFactor(k, robot.v_max, sigma_limit))
    factors.extend(extra_factors)
    return factors

"""Scenario and benchmark-suite files (YAML key-value schema).

Scenario schema (all units SI; positions are world [x, y] meters):

    name: env1
    map: env1.pgm            # relative to the scenario file
    resolution: 0.05         # meters per cell
    occupied_threshold: 128  # pixel < threshold => occupied
    seed: 0
    agents:
      - {id: a1, type: small, radius: 0.05, v_max: 0.5, start: [0.5, 0.5]}
        # optional per-agent `role: r1` pin, used with modes.assign: fixed
    roles:
      - {id: r1, dest: [4.5, 4.5]}
    hyper:                   # optional, defaults in Hyperparams
      lambda: 1.0
      qc: 1.0
      n_steps: 49
      total_time: 10.0
      sigma_obs: 0.1         # per-type override applied to every agent
    modes: {init: emap, assign: gra, sharing: conflict_field}

Suite schema:

    name: feasibility
    scenarios: [env1.yaml, env2.yaml]
    sigma_obs: [0.05, 0.1, 0.15, 0.2]
    modes:
      - {init: emap, assign: gra, sharing: conflict_field}
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import gp
from .engine import Hyperparams, Modes, Scenario
from .grids import InputError, RobotType, load_pgm


class ScenarioParseError(InputError):
    """Scenario/suite file does not match the documented schema."""


_MODE_CHOICES = {
    "init": {"emap", "straight"},
    "assign": {"gra", "nn", "fixed"},
    "sharing": {"conflict_field", "last_position", "pairwise_factor", "none"},
}


def _require(data, key, path):
    if key not in data:
        raise ScenarioParseError(f"{path}: missing required key '{key}'")
    return data[key]


def parse_hyper(data: dict) -> Hyperparams:
    solver = gp.SolverParams(
        max_iterations=int(data.get("max_iterations", 100)),
        rel_tol=float(data.get("rel_tol", 1e-4)),
        step_tol=float(data.get("step_tol", 1e-6)),
    )
    return Hyperparams(
        lam=float(data.get("lambda", 1.0)),
        qc=float(data.get("qc", 1.0)),
        n_steps=int(data.get("n_steps", 49)),
        total_time=float(data.get("total_time", 10.0)),
        sigma_c=float(data.get("sigma_c", 1e-4)),
        sigma_limit=float(data.get("sigma_limit", 1e-2)),
        sigma_mul=float(data.get("sigma_mul", 0.05)),
        horizon=(int(data["horizon"]) if data.get("horizon") is not None
                 else None),
        noise_std=float(data.get("noise_std", 0.0)),
        solver=solver,
        conf_blowup=float(data.get("conf_blowup", 10.0)),
        replan_every_step=bool(data.get("replan_every_step", True)),
    )


def parse_modes(data: dict, path="<modes>") -> Modes:
    modes = Modes(
        init=str(data.get("init", "emap")),
        assign=str(data.get("assign", "gra")),
        sharing=str(data.get("sharing", "conflict_field")),
    )
    for name, choices in _MODE_CHOICES.items():
        if getattr(modes, name) not in choices:
            raise ScenarioParseError(
                f"{path}: mode '{name}' must be one of {sorted(choices)}")
    return modes


def load_scenario(path, sigma_obs: float | None = None,
                  modes: Modes | None = None,
                  seed: int | None = None) -> Scenario:
    """Load and validate a scenario file; optional overrides for sweeps."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ScenarioParseError(f"{path}{where}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{path}: top level must be a mapping")

    map_rel = _require(data, "map", path)
    map_path = path.parent / map_rel
    if not map_path.exists():
        raise ScenarioParseError(f"{path}: map file '{map_rel}' not found")
    resolution = float(_require(data, "resolution", path))
    threshold = int(data.get("occupied_threshold", 128))
    grid = load_pgm(map_path, threshold, resolution)

    hyper = parse_hyper(data.get("hyper") or {})
    sigma = sigma_obs
    if sigma is None:
        sigma = float((data.get("hyper") or {}).get("sigma_obs", 0.1))

    agents = []
    fixed = {}
    for i, a in enumerate(_require(data, "agents", path)):
        if "role" in a:
            fixed[str(a["id"])] = str(a["role"])
        try:
            robot = RobotType(
                type_id=str(a.get("type", a["id"])),
                radius=float(a["radius"]),
                v_max=float(a["v_max"]),
                sigma_obs=float(a.get("sigma_obs", sigma)),
                epsilon_safe=float(a.get("epsilon_safe", 0.1)),
            )
            agents.append((str(a["id"]), robot,
                           np.array(a["start"], dtype=float)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioParseError(
                f"{path}: agents[{i}] invalid: {exc}") from exc
    if sigma_obs is not None:
        agents = [(aid, replace(robot, sigma_obs=sigma_obs), start)
                  for aid, robot, start in agents]

    roles = []
    for i, r in enumerate(_require(data, "roles", path)):
        try:
            roles.append((str(r["id"]), np.array(r["dest"], dtype=float)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioParseError(
                f"{path}: roles[{i}] invalid: {exc}") from exc

    file_modes = parse_modes(data.get("modes") or {}, str(path))
    try:
        return Scenario(
            grid=grid, agents=agents, roles=roles, hyper=hyper,
            modes=modes or file_modes,
            seed=seed if seed is not None else int(data.get("seed", 0)),
            name=str(data.get("name", path.stem)),
            fixed_assignment=fixed or None,
        )
    except InputError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc


@dataclass
class Suite:
    name: str
    scenario_paths: list
    sigma_obs: list
    modes: list  # list of Modes


def load_suite(path) -> Suite:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{path}: top level must be a mapping")
    scenario_paths = []
    for rel in _require(data, "scenarios", path):
        sp = path.parent / rel
        if not sp.exists():
            raise ScenarioParseError(f"{path}: scenario '{rel}' not found")
        scenario_paths.append(sp)
    sigmas = [float(s) for s in data.get("sigma_obs", [0.1])]
    modes = [parse_modes(m, str(path)) for m in _require(data, "modes", path)]
    return Suite(str(data.get("name", path.stem)), scenario_paths, sigmas,
                 modes)

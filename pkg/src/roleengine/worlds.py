"""Bundled benchmark environments and scenario files.

Six hand-authored 5x5 m environments (100x100 cells at 0.05 m/cell) with
scattered boxes, bar/gate walls, and concave pockets, plus a crossing
scenario for the sharing-mode comparison and a narrow-hallway swap whose
corridor is narrower than the two robots' combined diameter.

``write_bundle(out_dir)`` materializes the PGM maps, per-scenario YAML
files, and the two benchmark suite files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .grids import OccupancyGrid, save_pgm

RESOLUTION = 0.05
SIZE = 100  # cells per side (5 m)

ENV_NAMES = ["boxes", "bars", "concave", "gates", "scatter", "rooms"]


def _blank() -> np.ndarray:
    return np.zeros((SIZE, SIZE), dtype=bool)


def _add_box(occ: np.ndarray, x0: float, y0: float, x1: float, y1: float):
    c0 = max(int(round(x0 / RESOLUTION)), 0)
    c1 = min(int(round(x1 / RESOLUTION)), SIZE)
    r0 = max(int(round(y0 / RESOLUTION)), 0)
    r1 = min(int(round(y1 / RESOLUTION)), SIZE)
    occ[r0:r1, c0:c1] = True


def env_boxes() -> OccupancyGrid:
    occ = _blank()
    _add_box(occ, 1.2, 1.2, 1.8, 1.8)
    _add_box(occ, 3.0, 0.8, 3.6, 1.6)
    _add_box(occ, 2.2, 3.2, 3.0, 3.8)
    _add_box(occ, 0.8, 3.0, 1.4, 3.6)
    _add_box(occ, 3.6, 3.4, 4.2, 4.0)
    _add_box(occ, 2.1, 2.1, 2.7, 2.6)
    return OccupancyGrid(occ, RESOLUTION)


def env_bars() -> OccupancyGrid:
    occ = _blank()
    _add_box(occ, 1.5, 0.0, 1.7, 3.4)
    _add_box(occ, 3.2, 1.6, 3.4, 5.0)
    return OccupancyGrid(occ, RESOLUTION)


def env_concave() -> OccupancyGrid:
    occ = _blank()
    # C-shaped pocket opening to the left, centered mid-map.
    _add_box(occ, 1.8, 3.0, 3.2, 3.2)
    _add_box(occ, 1.8, 1.8, 3.2, 2.0)
    _add_box(occ, 3.0, 1.8, 3.2, 3.2)
    _add_box(occ, 0.9, 0.7, 1.5, 1.1)
    _add_box(occ, 1.2, 4.0, 1.8, 4.4)
    return OccupancyGrid(occ, RESOLUTION)


def env_gates() -> OccupancyGrid:
    occ = _blank()
    # Horizontal wall with two doors.
    _add_box(occ, 0.0, 2.4, 1.0, 2.6)
    _add_box(occ, 1.6, 2.4, 3.5, 2.6)
    _add_box(occ, 4.1, 2.4, 5.0, 2.6)
    _add_box(occ, 2.2, 0.8, 2.8, 1.4)
    _add_box(occ, 2.2, 3.6, 2.8, 4.2)
    return OccupancyGrid(occ, RESOLUTION)


def env_scatter() -> OccupancyGrid:
    occ = _blank()
    rng = np.random.default_rng(7)
    for _ in range(9):
        x = rng.uniform(0.9, 3.7)
        y = rng.uniform(0.9, 3.7)
        w = rng.uniform(0.3, 0.55)
        h = rng.uniform(0.3, 0.55)
        _add_box(occ, x, y, x + w, y + h)
    return OccupancyGrid(occ, RESOLUTION)


def env_rooms() -> OccupancyGrid:
    occ = _blank()
    # Vertical divider with two doors, plus a spur wall.
    _add_box(occ, 2.4, 0.0, 2.6, 1.4)
    _add_box(occ, 2.4, 2.0, 2.6, 3.4)
    _add_box(occ, 2.4, 4.0, 2.6, 5.0)
    _add_box(occ, 0.9, 2.4, 1.9, 2.6)
    return OccupancyGrid(occ, RESOLUTION)


def env_crossing() -> OccupancyGrid:
    occ = _blank()
    _add_box(occ, 2.25, 2.25, 2.75, 2.75)
    _add_box(occ, 0.9, 0.9, 1.3, 1.3)
    _add_box(occ, 3.7, 3.7, 4.1, 4.1)
    return OccupancyGrid(occ, RESOLUTION)


def env_hallway() -> OccupancyGrid:
    occ = _blank()
    # Thick divider with a single 0.4 m corridor: narrower than the two
    # hallway robots' combined diameter (2 * 2 * 0.12 = 0.48 m).
    _add_box(occ, 1.8, 0.0, 3.2, 2.3)
    _add_box(occ, 1.8, 2.7, 3.2, 5.0)
    return OccupancyGrid(occ, RESOLUTION)


ENV_BUILDERS = {
    "boxes": env_boxes,
    "bars": env_bars,
    "concave": env_concave,
    "gates": env_gates,
    "scatter": env_scatter,
    "rooms": env_rooms,
    "crossing": env_crossing,
    "hallway": env_hallway,
}

# 4 homogeneous robots (feasibility suite) per environment.
_FEAS_STARTS = [(0.4, 0.5), (0.4, 1.8), (0.4, 3.2), (0.4, 4.5)]
_FEAS_DESTS = [(4.6, 0.5), (4.6, 1.8), (4.6, 3.2), (4.6, 4.5)]

# 6 mixed-size robots (GRA suite): 3 small (0.02 m) and 3 large (0.1 m).
_GRA_STARTS = [(0.4, 0.5), (0.4, 2.0), (0.4, 4.5),
               (0.5, 1.5), (0.5, 3.5), (0.4, 3.0)]
_GRA_DESTS = [(4.6, 0.5), (4.6, 2.0), (4.6, 4.5),
              (4.5, 1.5), (4.5, 3.5), (4.6, 3.9)]


def _agent(aid, type_id, radius, v_max, start):
    return {"id": aid, "type": type_id, "radius": radius, "v_max": v_max,
            "start": [float(start[0]), float(start[1])]}


def feasibility_scenario(env_name: str) -> dict:
    agents = [
        _agent(f"a{i + 1}", "medium", 0.1, 0.8, s)
        for i, s in enumerate(_FEAS_STARTS)
    ]
    roles = [{"id": f"r{i + 1}", "dest": list(d)}
             for i, d in enumerate(_FEAS_DESTS)]
    return {
        "name": f"feas_{env_name}",
        "map": f"{env_name}.pgm",
        "resolution": RESOLUTION,
        "seed": 0,
        "agents": agents,
        "roles": roles,
        "hyper": {"lambda": 1.0, "qc": 1.0, "n_steps": 49,
                  "total_time": 12.0, "sigma_obs": 0.1},
        "modes": {"init": "emap", "assign": "gra",
                  "sharing": "conflict_field"},
    }


def gra_scenario(env_name: str) -> dict:
    agents = []
    for i in range(3):
        agents.append(_agent(f"s{i + 1}", "small", 0.02, 0.6,
                             _GRA_STARTS[i]))
    for i in range(3):
        agents.append(_agent(f"l{i + 1}", "large", 0.1, 0.8,
                             _GRA_STARTS[3 + i]))
    roles = [{"id": f"r{i + 1}", "dest": list(d)}
             for i, d in enumerate(_GRA_DESTS)]
    return {
        "name": f"gra_{env_name}",
        "map": f"{env_name}.pgm",
        "resolution": RESOLUTION,
        "seed": 0,
        "agents": agents,
        "roles": roles,
        "hyper": {"lambda": 1.0, "qc": 1.0, "n_steps": 49,
                  "total_time": 18.0, "sigma_obs": 0.1},
        "modes": {"init": "emap", "assign": "gra",
                  "sharing": "conflict_field"},
    }


def crossing_scenario() -> dict:
    starts = [(0.6, 0.6), (4.4, 0.6), (4.4, 4.4), (0.6, 4.4)]
    dests = [(4.4, 4.4), (0.6, 4.4), (0.6, 0.6), (4.4, 0.6)]
    agents = [_agent(f"a{i + 1}", "medium", 0.15, 0.8, s)
              for i, s in enumerate(starts)]
    roles = [{"id": f"r{i + 1}", "dest": list(d)}
             for i, d in enumerate(dests)]
    return {
        "name": "crossing",
        "map": "crossing.pgm",
        "resolution": RESOLUTION,
        "seed": 0,
        "agents": agents,
        "roles": roles,
        "hyper": {"lambda": 1.0, "qc": 1.0, "n_steps": 39,
                  "total_time": 16.0, "sigma_obs": 0.1},
        "modes": {"init": "emap", "assign": "gra",
                  "sharing": "conflict_field"},
    }


def hallway_scenario() -> dict:
    # Roles are pinned so the robots must swap rooms through the one
    # corridor; a free matching would just keep everyone home.
    agents = [
        dict(_agent("left", "medium", 0.12, 0.6, (0.9, 2.5)),
             role="to_right"),
        dict(_agent("right", "medium", 0.12, 0.6, (4.1, 2.5)),
             role="to_left"),
    ]
    roles = [
        {"id": "to_right", "dest": [4.1, 2.5]},
        {"id": "to_left", "dest": [0.9, 2.5]},
    ]
    return {
        "name": "hallway",
        "map": "hallway.pgm",
        "resolution": RESOLUTION,
        "seed": 0,
        "agents": agents,
        "roles": roles,
        "hyper": {"lambda": 1.0, "qc": 1.0, "n_steps": 59,
                  "total_time": 30.0, "sigma_obs": 0.1},
        "modes": {"init": "emap", "assign": "fixed",
                  "sharing": "conflict_field"},
    }


def feasibility_suite() -> dict:
    return {
        "name": "feasibility",
        "scenarios": [f"feas_{n}.yaml" for n in ENV_NAMES],
        "sigma_obs": [0.05, 0.10, 0.15, 0.2],
        "modes": [
            {"init": "emap", "assign": "gra", "sharing": "conflict_field"},
            {"init": "straight", "assign": "gra",
             "sharing": "conflict_field"},
        ],
    }


def gra_suite() -> dict:
    return {
        "name": "gra_vs_nn",
        "scenarios": [f"gra_{n}.yaml" for n in ENV_NAMES],
        "sigma_obs": [0.05, 0.10, 0.15, 0.2],
        "modes": [
            {"init": "emap", "assign": "gra", "sharing": "conflict_field"},
            {"init": "emap", "assign": "nn", "sharing": "conflict_field"},
        ],
    }


def write_bundle(out_dir) -> Path:
    """Write every bundled map, scenario, and suite file into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in ENV_BUILDERS.items():
        save_pgm(builder(), out / f"{name}.pgm")
    for name in ENV_NAMES:
        (out / f"feas_{name}.yaml").write_text(
            yaml.safe_dump(feasibility_scenario(name), sort_keys=False))
        (out / f"gra_{name}.yaml").write_text(
            yaml.safe_dump(gra_scenario(name), sort_keys=False))
    (out / "crossing.yaml").write_text(
        yaml.safe_dump(crossing_scenario(), sort_keys=False))
    (out / "hallway.yaml").write_text(
        yaml.safe_dump(hallway_scenario(), sort_keys=False))
    (out / "feasibility_suite.yaml").write_text(
        yaml.safe_dump(feasibility_suite(), sort_keys=False))
    (out / "gra_suite.yaml").write_text(
        yaml.safe_dump(gra_suite(), sort_keys=False))
    return out


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(
        description="Write the bundled maps and scenarios")
    parser.add_argument("out_dir", nargs="?", default="scenarios")
    args = parser.parse_args(argv)
    out = write_bundle(args.out_dir)
    print(f"wrote bundle to {out}")


if __name__ == "__main__":
    main()

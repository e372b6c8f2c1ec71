"""Central pipeline: negotiation, assignment hand-off, monitoring, replans."""

import json

import numpy as np
import pytest

from roleengine import engine as eng
from roleengine import gp
from roleengine import role_playing as rp
from roleengine.assignment import InfeasibleAssignmentError
from roleengine.engine import (Hyperparams, Modes, Scenario, build_type_env,
                               detect_problem, evaluate_and_assign,
                               replan_scenario, role_negotiation, run_central)
from roleengine.grids import InputError, OccupancyGrid, RobotType, compute_sdf

from conftest import make_grid


def open_grid(size=30, res=0.1):
    return OccupancyGrid(np.zeros((size, size), dtype=bool), res)


def small_robot(type_id="small", radius=0.08):
    return RobotType(type_id, radius, 1.0)


def two_agent_scenario(grid=None, **hyper_kwargs):
    grid = grid if grid is not None else open_grid()
    robot = small_robot()
    hyper = Hyperparams(n_steps=20, total_time=10.0, **hyper_kwargs)
    return Scenario(
        grid,
        agents=[("a1", robot, (0.3, 0.3)), ("a2", robot, (0.3, 2.7))],
        roles=[("r1", (2.7, 0.3)), ("r2", (2.7, 2.7))],
        hyper=hyper)


class TestScenario:
    def test_fewer_agents_than_roles_rejected(self):
        with pytest.raises(InputError):
            Scenario(open_grid(), agents=[("a", small_robot(), (0.5, 0.5))],
                     roles=[("r1", (1.0, 1.0)), ("r2", (2.0, 2.0))])

    def test_out_of_bounds_positions_rejected(self):
        with pytest.raises(InputError):
            Scenario(open_grid(), agents=[("a", small_robot(), (-1.0, 0.5))],
                     roles=[("r", (1.0, 1.0))])
        with pytest.raises(InputError):
            Scenario(open_grid(), agents=[("a", small_robot(), (0.5, 0.5))],
                     roles=[("r", (1.0, 99.0))])

    def test_robot_types_deduplicated(self):
        robot = small_robot()
        sc = Scenario(open_grid(),
                      agents=[("a1", robot, (0.5, 0.5)),
                              ("a2", robot, (1.5, 1.5))],
                      roles=[("r", (2.0, 2.0))])
        assert list(sc.robot_types()) == ["small"]


class TestNegotiation:
    def test_open_map_all_paths(self):
        result = role_negotiation(two_agent_scenario())
        assert result.feasibility
        assert result.uncovered_roles == []
        assert len(result.init_paths) == 4
        assert all(p is not None for p in result.init_paths.values())
        assert set(result.envs) == {"small"}

    def test_sealed_room_role_infeasible(self):
        rows = ["..........",
                "..........",
                "...####...",
                "...#..#...",
                "...####...",
                ".........."]
        grid = make_grid(rows, 0.3)
        robot = small_robot()
        sc = Scenario(grid,
                      agents=[("a1", robot, (0.3, 0.3))],
                      roles=[("r1", (1.35, 1.05))],  # inside the room
                      hyper=Hyperparams(n_steps=10))
        result = role_negotiation(sc)
        assert not result.feasibility
        assert result.uncovered_roles == ["r1"]

    def test_straight_mode_skips_emap(self):
        sc = two_agent_scenario()
        sc.modes.init = "straight"
        result = role_negotiation(sc)
        path = result.init_paths[("a1", "r1")]
        # Straight init: positions lie on the segment start-dest.
        pos = path.states[:, :2]
        expect = np.linspace((0.3, 0.3), (2.7, 0.3), pos.shape[0])
        np.testing.assert_allclose(pos, expect, atol=1e-9)

    def test_occupied_start_gives_no_path(self):
        rows = ["......",
                ".#....",
                "......",
                "......"]
        grid = make_grid(rows, 0.5)
        robot = RobotType("t", 0.6, 1.0)  # dilation swallows the start
        sc = Scenario(grid, agents=[("a1", robot, (0.75, 0.75))],
                      roles=[("r1", (2.75, 1.75))],
                      hyper=Hyperparams(n_steps=8))
        result = role_negotiation(sc)
        assert result.init_paths[("a1", "r1")] is None
        assert not result.feasibility

    def test_narrow_passage_excludes_large_type(self):
        # A gap only the small robot type fits through; the large type's
        # dilated map seals it.
        rows = ["...........#...........",
                "...........#...........",
                "...........#...........",
                "...........#...........",
                "...........#...........",
                ".......................",
                ".......................",
                "...........#...........",
                "...........#...........",
                "...........#...........",
                "...........#...........",
                "...........#..........."]
        grid = make_grid(rows, 0.1)
        small = RobotType("small", 0.05, 1.0)
        large = RobotType("large", 0.12, 1.0)
        sc = Scenario(grid,
                      agents=[("s", small, (0.3, 0.6)),
                              ("l", large, (0.3, 0.4))],
                      roles=[("r", (2.0, 0.6))],
                      hyper=Hyperparams(n_steps=10))
        result = role_negotiation(sc)
        assert result.init_paths[("s", "r")] is not None
        assert result.init_paths[("l", "r")] is None
        assert result.feasibility  # the small robot still covers the role


class TestBuildTypeEnv:
    def test_shapes_consistent(self):
        grid = open_grid()
        env = build_type_env(grid, small_robot())
        assert env.dilated.cells.shape == grid.cells.shape
        assert env.sdf.values.shape == grid.cells.shape
        assert env.skeleton.shape == grid.cells.shape
        assert env.emap.nodes
        # Skeleton pixels live in the dilated free space.
        assert not (env.skeleton & env.dilated.cells).any()


class TestEvaluateAndAssign:
    def test_gra_default(self):
        sc = two_agent_scenario()
        neg = role_negotiation(sc)
        qm, chosen = evaluate_and_assign(sc, neg)
        assert np.isfinite(qm.q).all()
        # Straight shots are optimal: a1 keeps its row, a2 keeps its row.
        assert ("a1", "r1") in chosen.pairs()
        assert ("a2", "r2") in chosen.pairs()

    def test_nn_mode_costed_under_q(self):
        sc = two_agent_scenario()
        sc.modes.assign = "nn"
        neg = role_negotiation(sc)
        qm, chosen = evaluate_and_assign(sc, neg)
        expect = sum(qm.q[qm.agent_ids.index(a), qm.role_ids.index(r)]
                     for a, r in chosen.pairs())
        assert chosen.total_cost == pytest.approx(expect)

    def test_fixed_mode(self):
        sc = two_agent_scenario()
        sc.modes.assign = "fixed"
        sc.fixed_assignment = {"a1": "r2", "a2": "r1"}
        neg = role_negotiation(sc)
        qm, chosen = evaluate_and_assign(sc, neg)
        assert set(chosen.pairs()) == {("a1", "r2"), ("a2", "r1")}
        assert np.isfinite(chosen.total_cost)

    def test_fixed_mode_requires_mapping(self):
        sc = two_agent_scenario()
        sc.modes.assign = "fixed"
        neg = role_negotiation(sc)
        with pytest.raises(InputError):
            evaluate_and_assign(sc, neg)

    def test_fixed_mode_infeasible_pair(self):
        sc = two_agent_scenario()
        sc.modes.assign = "fixed"
        sc.fixed_assignment = {"a1": "r2", "a2": "r1"}
        neg = role_negotiation(sc)
        neg.init_paths[("a1", "r2")] = None
        with pytest.raises(InfeasibleAssignmentError):
            evaluate_and_assign(sc, neg)


class TestDetectProblem:
    def _runtime(self, sdf, role):
        return rp.AgentRuntime("a1", small_robot(), role, sdf, np.eye(2))

    def test_quiescent_none(self):
        sdf = compute_sdf(open_grid())
        role = gp.ProcessRole("a1", "r", np.zeros((4, 4)), 0.5)
        agent = self._runtime(sdf, role)
        snap = {"a1": rp.ChannelEntry(1, 0, role)}
        assert detect_problem(snap, [agent], {}, Hyperparams(),
                              {"a1": 0.0}, False) == "none"

    def test_distress_triggers_replan(self):
        sdf = compute_sdf(open_grid())
        role = gp.ProcessRole("a1", "r", np.zeros((4, 4)), 0.5)
        agent = self._runtime(sdf, role)
        agent.distress = rp.DISTRESS_LIMIT
        assert detect_problem({}, [agent], {}, Hyperparams(), {},
                              False) == "replan"

    def test_map_change_triggers_replan(self):
        assert detect_problem({}, [], {}, Hyperparams(), {},
                              True) == "replan"

    def test_conflict_blowup_triggers_replan(self):
        # A published role plowing through an obstacle at speed has a
        # conflict cost far above its (zero) value at publish time.
        grid = make_grid(["......",
                          "..##..",
                          "..##..",
                          "......"], 0.5)
        sdf = compute_sdf(grid)
        states = np.zeros((6, 4))
        states[:, 0] = np.linspace(0.3, 2.7, 6)
        states[:, 1] = 0.9
        states[:, 2] = 0.5
        role = gp.ProcessRole("a1", "r", states, 0.5)
        agent = self._runtime(sdf, role)
        snap = {"a1": rp.ChannelEntry(1, 0, role)}
        assert detect_problem(snap, [agent], {}, Hyperparams(),
                              {"a1": 0.0}, False) == "replan"


class TestRunCentral:
    def test_agents_reach_destinations(self):
        sc = two_agent_scenario()
        result = run_central(sc)
        assert result.feasible
        assert result.replans == 0
        dests = dict(sc.roles)
        final = {aid: result.trace.states[-1, i, :2]
                 for i, aid in enumerate(result.trace.agent_ids)}
        for aid, rid in result.assignment.pairs():
            np.testing.assert_allclose(final[aid], dests[rid], atol=0.1)
        assert result.metrics["collision_frames"] == 0

    def test_report_round_trips_as_json(self):
        result = run_central(two_agent_scenario())
        report = json.loads(result.report_json())
        assert report["feasible"] is True
        assert {p["agent_id"] for p in report["assignment"]} == {"a1", "a2"}
        for key in ("total_cost", "min_inter_robot_distance", "avg_jerk",
                    "collision_frames", "per_agent_final_cost"):
            assert key in report

    def test_infeasible_aborts_before_launch(self):
        rows = ["..........",
                "...####...",
                "...#..#...",
                "...####...",
                ".........."]
        grid = make_grid(rows, 0.3)
        sc = Scenario(grid, agents=[("a1", small_robot(), (0.3, 0.3))],
                      roles=[("r1", (1.35, 0.75))],
                      hyper=Hyperparams(n_steps=10))
        result = run_central(sc)
        assert not result.feasible
        assert result.abort_reason == "infeasible roles"
        assert result.uncovered_roles == ["r1"]
        assert result.initial_roles == {} and result.trace is None

    def test_map_event_triggers_single_replan(self):
        sc = two_agent_scenario()
        # Drop a small obstacle far from both routes mid-run.
        changed = open_grid().copy()
        changed.cells[14:16, 0:2] = True
        # The replanned roles restart with a full horizon, so allow the
        # extra steps needed to finish them.
        result = run_central(sc, total_steps=28, map_events={5: changed})
        assert result.feasible
        assert result.replans == 1
        dests = dict(sc.roles)
        final = {aid: result.trace.states[-1, i, :2]
                 for i, aid in enumerate(result.trace.agent_ids)}
        for aid, rid in result.assignment.pairs():
            np.testing.assert_allclose(final[aid], dests[rid], atol=0.1)

    def test_sealing_wall_aborts_run(self):
        sc = two_agent_scenario()
        sealed = open_grid().copy()
        sealed.cells[:, 14:16] = True  # wall between starts and goals
        result = run_central(sc, map_events={4: sealed})
        assert not result.feasible
        assert "infeasible" in result.abort_reason
        # Executed history up to the abort is preserved in the trace.
        assert result.trace is not None
        assert result.trace.states.shape[0] >= 4


class TestReplan:
    def test_replan_scenario_moves_starts(self):
        sc = two_agent_scenario()
        moved = replan_scenario(sc, sc.grid, {"a1": (1.0, 1.0)})
        starts = {aid: tuple(start) for aid, _r, start in moved.agents}
        assert starts["a1"] == (1.0, 1.0)
        assert starts["a2"] == (0.3, 2.7)
        assert moved.roles == sc.roles

    def test_replan_unchanged_world_same_assignment(self):
        sc = two_agent_scenario()
        neg = role_negotiation(sc)
        _, first = evaluate_and_assign(sc, neg)
        again = replan_scenario(sc, sc.grid, {})
        neg2 = role_negotiation(again)
        _, second = evaluate_and_assign(again, neg2)
        assert first.pairs() == second.pairs()

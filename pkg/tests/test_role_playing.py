"""Shared channel, conflict fields, per-step re-solving, and trace metrics."""

import logging
import math

import numpy as np
import pytest

from roleengine import gp
from roleengine import role_playing as rp
from roleengine.grids import (OccupancyGrid, RobotType, SignedDistanceField,
                              compute_sdf)
from roleengine.role_playing import (AgentRuntime, ChannelEntry, ConflictField,
                                     SharedChannel, SimulationTrace,
                                     make_conflict_field, metrics,
                                     role_play_step, run_simulation,
                                     track_position)


def open_sdf(size=32, res=0.1):
    return compute_sdf(OccupancyGrid(np.zeros((size, size), dtype=bool), res))


def straight_role(agent, start, goal, n_steps, total_time, role="r"):
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    t = np.linspace(0.0, 1.0, n_steps + 1)[:, None]
    pos = start + t * (goal - start)
    vel = np.tile((goal - start) / total_time, (n_steps + 1, 1))
    return gp.ProcessRole(agent, role, np.hstack([pos, vel]),
                          total_time / n_steps)


def make_agent(agent_id, start, goal, sdf, radius=0.15, n_steps=20,
               total_time=10.0, **kwargs):
    robot = RobotType(agent_id + "_t", radius, 1.0)
    role = straight_role(agent_id, start, goal, n_steps, total_time)
    return AgentRuntime(agent_id, robot, role, sdf, np.eye(2), **kwargs)


class TestSharedChannel:
    def test_read_your_write(self):
        ch = SharedChannel()
        role = straight_role("a", (0, 0), (1, 0), 4, 2.0)
        ch.publish("a", role, step=0)
        entries, grid, env_version = ch.subscribe()
        assert grid is None and env_version == 0
        np.testing.assert_array_equal(entries["a"].role.states, role.states)

    def test_latest_value_wins(self):
        ch = SharedChannel()
        ch.publish("a", straight_role("a", (0, 0), (1, 0), 4, 2.0))
        second = straight_role("a", (0, 0), (2, 0), 4, 2.0)
        ch.publish("a", second, step=3)
        entries, _, _ = ch.subscribe()
        assert entries["a"].step == 3
        np.testing.assert_array_equal(entries["a"].role.states, second.states)

    def test_versions_strictly_increase(self):
        ch = SharedChannel()
        role = straight_role("a", (0, 0), (1, 0), 4, 2.0)
        versions = [ch.publish("a", role) for _ in range(5)]
        assert versions == [1, 2, 3, 4, 5]
        assert ch.publish("b", role) == 1  # per-key counters

    def test_snapshot_isolation(self):
        ch = SharedChannel()
        role = straight_role("a", (0, 0), (1, 0), 4, 2.0)
        ch.publish("a", role)
        entries, _, _ = ch.subscribe()
        # Mutating the snapshot must not leak back into the channel,
        entries["a"].role.states[0, 0] = 99.0
        fresh, _, _ = ch.subscribe()
        assert fresh["a"].role.states[0, 0] == 0.0
        # and later publishes must not mutate an old snapshot.
        ch.publish("a", straight_role("a", (5, 5), (6, 5), 4, 2.0))
        assert entries["a"].role.states[1, 0] == role.states[1, 0]

    def test_publish_does_not_alias_caller_role(self):
        ch = SharedChannel()
        role = straight_role("a", (0, 0), (1, 0), 4, 2.0)
        ch.publish("a", role)
        role.states[0, 0] = -7.0
        entries, _, _ = ch.subscribe()
        assert entries["a"].role.states[0, 0] == 0.0

    def test_env_versions(self):
        ch = SharedChannel()
        grid = OccupancyGrid(np.zeros((4, 4), dtype=bool), 1.0)
        assert ch.publish_env(grid) == 1
        assert ch.publish_env(grid) == 2
        _, got, version = ch.subscribe()
        assert version == 2
        np.testing.assert_array_equal(got.cells, grid.cells)


class TestConflictField:
    def test_no_other_agents_equals_static(self):
        sdf = open_sdf()
        robot = RobotType("t", 0.15, 1.0)
        cf = make_conflict_field({}, "a", sdf, robot, {}, k=0)
        assert cf.field_for(3) is sdf

    def test_far_agent_leaves_near_field_unchanged(self):
        sdf = open_sdf()
        robot = RobotType("t", 0.15, 1.0)
        other = straight_role("b", (3.0, 3.0), (3.0, 3.0), 10, 5.0)
        snap = {"b": ChannelEntry(1, 0, other)}
        cf = make_conflict_field(snap, "a", sdf, robot, {"b": 0.15}, k=0)
        # Cells far from the stamp keep the static value.
        pts = np.array([[0.4, 0.4], [1.0, 0.5]])
        static_vals, _ = sdf.sample(pts)
        got_vals, _ = cf.sample(5, pts)
        np.testing.assert_array_equal(got_vals, static_vals)

    def test_dominance_and_crossing_cell(self):
        sdf = open_sdf(32, 0.1)
        robot = RobotType("t", 0.1, 1.0, epsilon_safe=0.1)
        other = straight_role("b", (0.5, 1.6), (2.7, 1.6), 10, 5.0)
        snap = {"b": ChannelEntry(1, 0, other)}
        cf = make_conflict_field(snap, "a", sdf, robot, {"b": 0.1}, k=0)
        for t in range(11):
            fld = cf.field_for(t)
            assert (fld.values <= sdf.values + 1e-12).all()
            center = other.states[t, :2]
            # At the other agent's center the field is at least the full
            # stamp radius below free clearance.
            assert fld.distance(center) <= -0.3 + fld.resolution
            assert fld.distance(center) < sdf.distance(center)

    def test_parked_beyond_trajectory_end(self):
        sdf = open_sdf()
        robot = RobotType("t", 0.1, 1.0)
        other = straight_role("b", (1.0, 1.0), (2.0, 1.0), 5, 2.5)
        snap = {"b": ChannelEntry(1, 0, other)}
        cf = make_conflict_field(snap, "a", sdf, robot, {"b": 0.1}, k=0,
                                 n_self=9)
        # Past the other agent's last support it parks at its goal.
        assert cf.field_for(9).distance((2.0, 1.0)) < sdf.distance((2.0, 1.0))
        # The start position is outside the stamp window at t=9.
        assert cf.field_for(9).distance((0.85, 1.0)) == pytest.approx(
            sdf.distance((0.85, 1.0)))

    def test_horizon_limits_stamping(self):
        sdf = open_sdf()
        robot = RobotType("t", 0.1, 1.0)
        other = straight_role("b", (1.0, 1.0), (2.0, 1.0), 10, 5.0)
        snap = {"b": ChannelEntry(1, 0, other)}
        cf = make_conflict_field(snap, "a", sdf, robot, {"b": 0.1}, k=0,
                                 horizon=3)
        assert cf.field_for(3) is not sdf
        assert cf.field_for(4) is sdf

    def test_stale_entry_uses_last_position(self, caplog):
        sdf = open_sdf()
        robot = RobotType("t", 0.1, 1.0)
        other = straight_role("b", (1.0, 1.0), (2.0, 1.0), 10, 5.0)
        snap = {"b": ChannelEntry(1, 0, other)}  # published at step 0
        with caplog.at_level(logging.WARNING):
            cf = make_conflict_field(snap, "a", sdf, robot, {"b": 0.1},
                                     k=8, horizon=2)
        assert any("stale" in rec.message for rec in caplog.records)
        # Only the last position is stamped, at every index in range.
        fld = cf.field_for(9)
        assert fld.distance((2.0, 1.0)) < sdf.distance((2.0, 1.0))
        # Mid-trajectory positions are not stamped (outside the window of
        # the last-position disc).
        assert fld.distance((0.85, 1.0)) == pytest.approx(
            sdf.distance((0.85, 1.0)))

    def test_lazy_copies_leave_static_untouched(self):
        sdf = open_sdf()
        keep = sdf.values.copy()
        cf = ConflictField(sdf)
        cf.stamp(2, (1.0, 1.0), 0.3, 0.5)
        np.testing.assert_array_equal(sdf.values, keep)
        assert cf.field_for(2) is not sdf


class TestTrackPosition:
    def test_noise_free_exact(self):
        role = straight_role("a", (0, 0), (2, 0), 4, 2.0)
        np.testing.assert_array_equal(track_position(role, 2),
                                      role.states[2, :2])
        # Past the end it clamps to the final support.
        np.testing.assert_array_equal(track_position(role, 99),
                                      role.states[-1, :2])

    def test_seeded_determinism(self):
        role = straight_role("a", (0, 0), (2, 0), 4, 2.0)
        a = track_position(role, 1, 0.05, np.random.default_rng(7))
        b = track_position(role, 1, 0.05, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_noise_statistics(self):
        role = straight_role("a", (0, 0), (2, 0), 4, 2.0)
        rng = np.random.default_rng(0)
        draws = np.array([track_position(role, 1, 0.2, rng)
                          for _ in range(10000)])
        err = draws - role.states[1, :2]
        assert abs(err.mean()) < 0.01
        assert err.std() == pytest.approx(0.2, rel=0.05)


class TestRolePlayStep:
    def test_fixpoint_in_open_space(self):
        sdf = open_sdf(50, 0.1)
        agent = make_agent("a", (0.5, 2.5), (4.0, 2.5), sdf,
                           n_steps=10, total_time=10.0)
        ch = SharedChannel()
        before = agent.role.states.copy()
        for _ in range(3):
            snap, _, _ = ch.subscribe()
            role_play_step(agent, snap, ch, {})
        assert np.abs(agent.role.states - before).max() < 1e-6

    def test_frozen_history_is_bit_exact(self):
        sdf = open_sdf(50, 0.1)
        agent = make_agent("a", (0.5, 2.5), (4.0, 2.5), sdf, n_steps=8)
        ch = SharedChannel()
        executed = {}
        for _ in range(8):
            k = agent.k
            snap, _, _ = ch.subscribe()
            role_play_step(agent, snap, ch, {})
            executed[k] = agent.role.states[k].copy()
        for k, state in executed.items():
            np.testing.assert_array_equal(agent.role.states[k], state)

    def test_solver_failure_keeps_role_and_flags_distress(self, monkeypatch):
        sdf = open_sdf()
        agent = make_agent("a", (0.4, 0.4), (2.5, 0.4), sdf, n_steps=6)
        ch = SharedChannel()

        def boom(*args, **kwargs):
            raise gp.SolverError("forced failure")

        monkeypatch.setattr(gp, "solve_lm", boom)
        before = agent.role.states.copy()
        for i in range(rp.DISTRESS_LIMIT):
            assert not agent.distressed
            snap, _, _ = ch.subscribe()
            version = role_play_step(agent, snap, ch, {})
            assert version == i + 1
        assert agent.distressed
        np.testing.assert_array_equal(agent.role.states, before)

    def test_done_agent_republishes_final_role(self):
        sdf = open_sdf()
        agent = make_agent("a", (0.4, 0.4), (2.0, 0.4), sdf, n_steps=3)
        agent.k = 3
        ch = SharedChannel()
        snap, _, _ = ch.subscribe()
        role_play_step(agent, snap, ch, {})
        entries, _, _ = ch.subscribe()
        assert entries["a"].step == 3
        assert agent.done


class TestRunSimulation:
    def test_single_agent_follows_plan(self):
        sdf = open_sdf(50, 0.1)
        agent = make_agent("a", (0.5, 2.5), (4.0, 2.5), sdf, n_steps=10)
        plan = agent.role.states.copy()
        ch = SharedChannel()
        trace = run_simulation([agent], ch, 10)
        np.testing.assert_allclose(trace.states[:, 0, :2], plan[:, :2],
                                   atol=1e-5)

    def test_round_robin_deterministic(self):
        def run_once():
            sdf = open_sdf(50, 0.1)
            a = make_agent("a", (0.5, 2.0), (4.0, 3.0), sdf, n_steps=12)
            b = make_agent("b", (4.0, 2.0), (0.5, 3.0), sdf, n_steps=12)
            return run_simulation([a, b], SharedChannel(), 12).to_csv()

        assert run_once() == run_once()

    def test_head_on_agents_keep_separation(self):
        sdf = open_sdf(50, 0.1)
        a = make_agent("a", (0.5, 2.5), (4.5, 2.5), sdf, n_steps=25,
                       total_time=12.5)
        b = make_agent("b", (4.5, 2.5), (0.5, 2.5), sdf, n_steps=25,
                       total_time=12.5)
        trace = run_simulation([a, b], SharedChannel(), 25)
        result = metrics(trace, {"a": 0.15, "b": 0.15})
        assert result["min_inter_robot_distance"] >= 0.3
        assert result["collision_frames"] == 0
        # Both still reach their goals.
        np.testing.assert_allclose(trace.states[-1, 0, :2], (4.5, 2.5),
                                   atol=0.05)
        np.testing.assert_allclose(trace.states[-1, 1, :2], (0.5, 2.5),
                                   atol=0.05)

    def test_concurrent_schedule_preserves_safety(self):
        sdf = open_sdf(50, 0.1)
        a = make_agent("a", (0.5, 2.5), (4.5, 2.5), sdf, n_steps=20)
        b = make_agent("b", (4.5, 2.5), (0.5, 2.5), sdf, n_steps=20)
        trace = run_simulation([a, b], SharedChannel(), 20,
                               schedule="concurrent")
        result = metrics(trace, {"a": 0.15, "b": 0.15})
        assert result["collision_frames"] == 0

    def test_trace_csv_schema(self):
        sdf = open_sdf()
        agent = make_agent("a", (0.4, 0.4), (2.0, 0.4), sdf, n_steps=4)
        trace = run_simulation([agent], SharedChannel(), 4)
        lines = trace.to_csv().strip().split("\n")
        assert lines[0] == "step,agent_id,x,y,vx,vy,published_version"
        assert len(lines) == 6
        assert lines[1].split(",")[:2] == ["0", "a"]


class TestMetrics:
    def _trace(self, states, dt=0.5, agent_ids=None):
        states = np.asarray(states, dtype=np.float64)
        n_frames, n_agents = states.shape[:2]
        ids = agent_ids or [f"a{i}" for i in range(n_agents)]
        roles = {aid: straight_role(aid, (0, 0), (1, 0), 2, 1.0)
                 for aid in ids}
        return SimulationTrace(ids, dt, states,
                               np.ones((n_frames, n_agents), dtype=np.int64),
                               roles)

    def test_stationary_agent_zero_jerk(self):
        states = np.zeros((6, 1, 4))
        out = metrics(self._trace(states), {"a0": 0.1})
        assert out["avg_jerk"] == 0.0
        assert math.isinf(out["min_inter_robot_distance"])

    def test_constant_velocity_zero_jerk(self):
        states = np.zeros((8, 1, 4))
        states[:, 0, 0] = np.arange(8) * 0.25
        out = metrics(self._trace(states), {"a0": 0.1})
        assert out["avg_jerk"] == pytest.approx(0.0, abs=1e-12)

    def test_parallel_lines_min_distance(self):
        states = np.zeros((5, 2, 4))
        states[:, 0, 0] = np.arange(5)
        states[:, 1, 0] = np.arange(5)
        states[:, 1, 1] = 1.0
        out = metrics(self._trace(states), {"a0": 0.1, "a1": 0.1})
        assert out["min_inter_robot_distance"] == pytest.approx(1.0)
        assert out["collision_frames"] == 0

    def test_collision_frames_counted_once_per_frame(self):
        states = np.zeros((4, 3, 4))
        states[:, 1, 1] = 5.0  # a1 far away throughout
        states[:2, 2, 0] = 0.1  # a2 overlaps a0 in frames 0-1
        states[2:, 2, 0] = 5.0
        radii = {"a0": 0.2, "a1": 0.2, "a2": 0.2}
        out = metrics(self._trace(states), radii)
        assert out["collision_frames"] == 2

    def test_empty_trace_rejected(self):
        trace = self._trace(np.zeros((2, 1, 4)))
        trace.states = np.zeros((0, 0, 4))
        with pytest.raises(ValueError):
            metrics(trace, {"a0": 0.1})

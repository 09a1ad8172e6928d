"""Environment tests: independently transcribed pendulum integrator,
hand-walked two-bridges geometry, and tabular MDP generator properties."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advrl.envs import (
    PendulumEnv,
    TwoBridgesEnv,
    angle_normalize,
    make_env,
    pendulum_step,
    random_mdp,
    two_bridges_step,
)
from advrl.errors import ConfigError


def _pendulum_reference(th, th_dot, torques):
    """Straight-line reimplementation of the swing-up dynamics using the
    continuous angle instead of the (cos, sin) encoding."""
    out = []
    for u_raw in torques:
        u = 2.0 * min(max(u_raw, -1.0), 1.0)
        wrapped = ((th + math.pi) % (2.0 * math.pi)) - math.pi
        cost = wrapped ** 2 + 0.1 * th_dot ** 2 + 0.001 * u * u
        th_dot = th_dot + (1.5 * 10.0 * math.sin(th) + 3.0 * u) * 0.05
        th_dot = min(max(th_dot, -8.0), 8.0)
        th = th + th_dot * 0.05
        out.append((math.cos(th), math.sin(th), th_dot, -cost))
    return out


class TestPendulum:
    def test_matches_reference_integrator(self):
        rng = np.random.default_rng(0)
        th, th_dot = 0.3, -0.4
        torques = rng.uniform(-1.0, 1.0, size=50)
        ref = _pendulum_reference(th, th_dot, torques)
        state = np.array([math.cos(th), math.sin(th), th_dot])
        for i, u in enumerate(torques):
            state, r, done = pendulum_step(state, u)
            c, s, v, rr = ref[i]
            npt.assert_allclose(state, [c, s, v], atol=1e-9)
            npt.assert_allclose(r, rr, atol=1e-9)
            assert done is False

    def test_hanging_at_rest_costs_pi_squared(self):
        state = np.array([-1.0, 0.0, 0.0])
        _, r, _ = pendulum_step(state, 0.0)
        npt.assert_allclose(r, -math.pi ** 2, rtol=1e-12)

    def test_upright_at_rest_is_free_and_stationary(self):
        state = np.array([1.0, 0.0, 0.0])
        nxt, r, _ = pendulum_step(state, 0.0)
        assert r == 0.0
        npt.assert_allclose(nxt, state, atol=0.0)

    def test_torque_scales_and_clips(self):
        state = np.array([1.0, 0.0, 0.0])
        _, r_unit, _ = pendulum_step(state, 1.0)
        _, r_over, _ = pendulum_step(state, 7.5)
        npt.assert_allclose(r_unit, -0.001 * 4.0, rtol=1e-12)
        assert r_over == r_unit

    def test_speed_clips_at_eight(self):
        state = np.array([-1.0, 0.0, 7.9])
        for _ in range(20):
            state, _, _ = pendulum_step(state, 1.0)
            assert abs(state[2]) <= 8.0

    def test_horizon_and_reset_determinism(self):
        env = PendulumEnv()
        obs0 = env.reset(np.random.default_rng(7))
        traj = []
        done = False
        steps = 0
        while not done:
            obs, r, done = env.step(0.1)
            traj.append((obs.copy(), r))
            steps += 1
        assert steps == 200
        env2 = PendulumEnv()
        obs0b = env2.reset(np.random.default_rng(7))
        npt.assert_array_equal(obs0, obs0b)
        for obs_a, r_a in traj:
            obs_b, r_b, _ = env2.step(0.1)
            npt.assert_array_equal(obs_a, obs_b)
            assert r_a == r_b

    def test_reset_ranges(self):
        env = PendulumEnv()
        rng = np.random.default_rng(3)
        for _ in range(100):
            obs = env.reset(rng)
            npt.assert_allclose(obs[0] ** 2 + obs[1] ** 2, 1.0, rtol=1e-12)
            assert -1.0 <= obs[2] <= 1.0


class TestAngleNormalize:
    @given(st.floats(-50.0, 50.0))
    @settings(max_examples=200, deadline=None)
    def test_range_and_congruence(self, x):
        y = angle_normalize(x)
        assert -math.pi <= y < math.pi or math.isclose(y, math.pi)
        assert math.isclose(math.sin(y), math.sin(x), abs_tol=1e-9)
        assert math.isclose(math.cos(y), math.cos(x), abs_tol=1e-9)


class TestTwoBridges:
    def test_narrow_centerline_reaches_goal_in_15_steps(self):
        env = TwoBridgesEnv()
        obs = env.reset(np.random.default_rng(0))
        npt.assert_array_equal(obs, [0.0, 0.0])
        total = 0.0
        for step in range(1, 101):
            obs, r, done = env.step([1.0, 0.0])
            total += r
            if done:
                break
        assert step == 15
        npt.assert_allclose(obs, [3.75, 0.0], atol=1e-12)
        npt.assert_allclose(total, 10.0 - 0.01 * 15, atol=1e-9)

    def test_mid_gap_point_falls_and_corridor_points_do_not(self):
        # (2, 0.5) sits between the narrow bridge and both detours.
        _, r, done = two_bridges_step([1.75, 0.5], [1.0, 0.0])
        assert done and r == -10.0
        # (2, 1.0) is within 0.75 of the upper detour polyline.
        _, r, done = two_bridges_step([1.75, 1.0], [1.0, 0.0])
        assert not done and r == -0.01
        # narrow bridge edge
        _, r, done = two_bridges_step([1.75, 0.25], [1.0, 0.0])
        assert not done and r == -0.01

    def test_no_fall_outside_open_strip(self):
        _, r, done = two_bridges_step([-0.25, 2.9], [-1.0, 0.0])
        assert not done and r == -0.01
        _, r, done = two_bridges_step([4.25, 2.9], [1.0, 0.0])
        assert not done and r == -0.01

    def test_goal_detection_and_reward(self):
        obs, r, done = two_bridges_step([3.8, 0.0], [1.0, 0.0])
        assert done
        npt.assert_allclose(r, 9.99, rtol=1e-12)
        npt.assert_allclose(obs, [4.05, 0.0], atol=1e-12)

    def test_action_clipped_to_unit_ball(self):
        obs, _, _ = two_bridges_step([0.0, 0.0], [3.0, 4.0])
        npt.assert_allclose(obs, [0.25 * 0.6, 0.25 * 0.8], atol=1e-12)

    def test_position_clipped_to_box(self):
        obs, _, done = two_bridges_step([0.0, 2.9], [0.0, 1.0])
        npt.assert_allclose(obs, [0.0, 3.0], atol=1e-12)
        assert not done

    def test_horizon_caps_episode(self):
        env = TwoBridgesEnv()
        env.reset(np.random.default_rng(0))
        done = False
        steps = 0
        while not done:
            _, _, done = env.step([0.0, 1.0])  # hug the top wall forever
            steps += 1
        assert steps == 100

    def test_wide_route_return_is_lower_but_positive(self):
        env = TwoBridgesEnv()
        env.reset(np.random.default_rng(0))
        waypoints = [np.array([2.0, 2.0]), np.array([4.0, 0.0])]
        idx, pos, total, done = 0, np.zeros(2), 0.0, False
        for _ in range(100):
            delta = waypoints[idx] - pos
            pos, r, done = env.step(delta / max(np.linalg.norm(delta), 0.25))
            total += r
            if np.linalg.norm(pos - waypoints[idx]) < 1e-9 and idx == 0:
                idx = 1
            if done:
                break
        assert done and total > 0.0
        assert total < 10.0 - 0.01 * 15


class TestRandomMdp:
    def test_shapes_and_row_sums(self):
        mdp = random_mdp(0, 6, 3, 2)
        assert mdp.P.shape == (6, 3, 6) and mdp.R.shape == (6, 3)
        npt.assert_allclose(mdp.P.sum(axis=2), 1.0, atol=1e-12)
        npt.assert_allclose(mdp.perturb.sum(axis=1), 1.0, atol=1e-12)
        assert mdp.R.min() >= 0.0 and mdp.R.max() <= 1.0

    @given(st.integers(0, 10_000), st.integers(2, 9), st.integers(1, 4))
    @settings(max_examples=100, deadline=None)
    def test_support_properties(self, seed, n_states, n_actions):
        k = 1 + seed % n_states
        mdp = random_mdp(seed, n_states, n_actions, k)
        for s in range(n_states):
            sup = mdp.supports[s]
            assert len(sup) == k and s in sup
            npt.assert_allclose(mdp.perturb[s, sup], 1.0 / k, rtol=1e-12)
            assert np.all(np.delete(mdp.perturb[s], sup) == 0.0)

    def test_support_one_gives_identity_prior(self):
        mdp = random_mdp(5, 4, 2, 1)
        npt.assert_array_equal(mdp.perturb, np.eye(4))

    def test_determinism(self):
        a, b = random_mdp(42, 5, 2, 3), random_mdp(42, 5, 2, 3)
        npt.assert_array_equal(a.P, b.P)
        npt.assert_array_equal(a.R, b.R)
        npt.assert_array_equal(a.perturb, b.perturb)

    def test_validation_rejects_bad_arguments(self):
        with pytest.raises(ConfigError):
            random_mdp(0, 1, 2, 1)
        with pytest.raises(ConfigError):
            random_mdp(0, 4, 2, 5)
        with pytest.raises(ConfigError):
            random_mdp(0, 4, 2, 0)
        with pytest.raises(ConfigError):
            random_mdp(0, 4, 2, 2, gamma=1.0)


class TestMakeEnv:
    def test_ids(self):
        assert isinstance(make_env("pendulum"), PendulumEnv)
        assert isinstance(make_env("two_bridges"), TwoBridgesEnv)
        mdp = make_env("tabular:3:6:2:3")
        assert mdp.n_states == 6 and mdp.n_actions == 2
        assert all(len(s) == 3 for s in mdp.supports)

    def test_bad_ids_raise(self):
        for bad in ("cartpole", "tabular:1:2", "tabular:a:b:c:d"):
            with pytest.raises(ConfigError):
                make_env(bad)

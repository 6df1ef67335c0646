import math
from dataclasses import replace

import numpy as np
import pytest

from tripod.environment import (
    EpisodeConfig,
    TripodEnv,
    VectorEnv,
    compute_reward,
    normalized_action_to_displacements,
    sample_goal,
    vector_env,
)
from tripod.evaluation import PointMassEnv
from tripod.rng import substream


CFG = EpisodeConfig()


def test_reward_at_goal_is_twenty():
    r = compute_reward((0, 0, 0, 0, 0, 0), (0, 0), (0, 0), CFG, goal_z=0.0)
    assert abs(r - 20.0) < 1e-9


def test_reward_at_dmax_is_zero():
    r = compute_reward((CFG.d_max, 0, 0, 0, 0, 0), (0, 0), (0, 0), CFG, goal_z=0.0)
    assert abs(r) < 1e-9


def test_reward_tilt_penalty_substitution():
    # oracle: d = d_max kills the proximity term; r = -|10| - |5| = -15
    r = compute_reward((CFG.d_max, 0, 0, 10.0, 5.0, 0), (0, 0), (0, 0), CFG, goal_z=0.0)
    assert r == pytest.approx(-15.0, abs=1e-9)


def test_reward_velocity_direction_and_sgn_zero():
    # x < x_g contributes +v_x; y == y_g contributes nothing (sgn(0) = 0)
    base = compute_reward((0, 5, 0, 0, 0, 0), (0, 0), (10.0, 5.0), CFG, goal_z=0.0)
    r = compute_reward((0, 5, 0, 0, 0, 0), (3.0, 7.0), (10.0, 5.0), CFG, goal_z=0.0)
    assert r - base == pytest.approx(3.0, abs=1e-12)


def test_reward_proximity_strictly_decreasing():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d1, d2 = np.sort(rng.uniform(0.0, CFG.d_max, size=2))
        if d1 == d2:
            continue
        r1 = compute_reward((d1, 0, 0, 0, 0, 0), (0, 0), (0, 0), CFG, goal_z=0.0)
        r2 = compute_reward((d2, 0, 0, 0, 0, 0), (0, 0), (0, 0), CFG, goal_z=0.0)
        assert r2 < r1


def test_reward_mirror_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(200):
        x, y = rng.uniform(-80, 80, 2)
        xg, yg = rng.uniform(-100, 100, 2)
        vx, vy = rng.uniform(-20, 20, 2)
        roll, pitch = rng.uniform(-30, 30, 2)
        r1 = compute_reward((x, y, 50, roll, pitch, 0), (vx, vy), (xg, yg), CFG, goal_z=50.0)
        r2 = compute_reward((x, -y, 50, -roll, pitch, 0), (vx, -vy), (xg, -yg), CFG, goal_z=50.0)
        assert r1 == pytest.approx(r2, abs=1e-9)


def test_goal_sampling_band():
    rng = substream(123, "goal")
    for _ in range(10000):
        x, y = sample_goal(rng, (40.0, 100.0))
        assert 40.0 < abs(x) < 100.0
        assert 40.0 < abs(y) < 100.0


def test_goal_signs_equiprobable():
    rng = substream(7, "goal")
    signs = [np.sign(sample_goal(rng, (40.0, 100.0))[0]) for _ in range(4000)]
    assert abs(np.mean(signs)) < 0.05


def test_action_mapping_affine_and_clamped():
    disp = normalized_action_to_displacements(np.full(9, -1.0), 25.0)
    assert np.allclose(disp, 0.0)
    disp = normalized_action_to_displacements(np.full(9, 1.0), 25.0)
    assert np.allclose(disp, 25.0)
    disp = normalized_action_to_displacements(np.full(9, 3.0), 25.0)
    assert np.allclose(disp, 25.0)
    disp = normalized_action_to_displacements(np.zeros(9), 25.0)
    assert np.allclose(disp, 12.5)


def test_episode_config_invariants():
    with pytest.raises(ValueError):
        EpisodeConfig(distance_threshold=45.0, goal_band=(40.0, 100.0)).validate()
    with pytest.raises(ValueError):
        EpisodeConfig(max_steps=0).validate()
    with pytest.raises(ValueError):
        EpisodeConfig(d_max=10.0).validate()


def test_reset_deterministic_and_rest_pose(robot_env):
    obs1 = robot_env.reset(seed=5)
    obs2 = robot_env.reset(seed=5)
    assert obs1 == obs2
    assert obs1.agent_pose[2] == pytest.approx(robot_env.rest_height, abs=1e-9)
    assert np.max(np.abs(obs1.agent_pose[3:])) < 1e-6
    assert obs1.agent_pose[0] == pytest.approx(0.0, abs=1e-9)


def test_step_after_end_raises(robot_env):
    robot_env.reset(seed=1)
    robot_env.teleport(*robot_env.goal)  # drop the robot onto the goal
    result = robot_env.step(np.zeros(9))
    assert result.terminated and not result.truncated
    with pytest.raises(RuntimeError):
        robot_env.step(np.zeros(9))


def test_teleport_within_threshold_terminates(robot_env):
    robot_env.reset(seed=2)
    gx, gy = robot_env.goal
    robot_env.teleport(gx, gy)
    result = robot_env.step(np.full(9, -1.0))
    assert result.terminated is True
    assert result.truncated is False
    assert result.info["d"] <= robot_env.episode.distance_threshold


def test_time_limit_truncates():
    env = PointMassEnv(EpisodeConfig(max_steps=50), seed=3)
    env.reset(seed=3)
    for i in range(49):
        r = env.step(np.zeros(9))
        assert not (r.terminated or r.truncated)
    r = env.step(np.zeros(9))
    assert r.truncated and not r.terminated
    assert r.info["step_index"] == 50


def test_tilt_truncates(robot_env):
    robot_env.reset(seed=4)
    # rotate the whole robot 60 degrees about x: beyond the 45 degree limit
    a = math.radians(60.0)
    rot = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    center = robot_env.state.positions.mean(axis=0)
    robot_env.state.positions = (robot_env.state.positions - center) @ rot.T + center
    result = robot_env.step(np.full(9, -1.0))
    assert result.truncated is True
    assert result.terminated is False


def test_height_truncates(robot_env):
    robot_env.reset(seed=4)
    robot_env.state.positions[:, 2] *= 0.2
    result = robot_env.step(np.full(9, -1.0))
    assert result.truncated is True


def test_success_wins_tie():
    env = PointMassEnv(EpisodeConfig(max_steps=5), seed=6)
    env.reset(seed=6)
    for _ in range(4):
        env.step(np.zeros(9))
    env.teleport(*env.goal)  # step 5 will land on the goal exactly at the limit
    r = env.step(np.zeros(9))
    assert r.terminated is True
    assert r.truncated is False


def test_physics_error_truncates_with_flag(robot_env):
    robot_env.reset(seed=8)
    robot_env.state.velocities[0, 0] = np.nan  # blown-up state
    result = robot_env.step(np.zeros(9))
    assert result.truncated is True
    assert result.info.get("physics_error") is True


def test_vector_env_matches_solo_runs():
    def make_env(seed):
        return PointMassEnv(EpisodeConfig(max_steps=30), seed=seed)

    actions = [np.tanh(np.random.default_rng(90 + t).normal(size=9)) for t in range(30)]

    solo = []
    for seed in (101, 202, 303, 404):
        env = make_env(seed)
        env.reset()
        solo.append([env.step(a) for a in actions])

    venv = vector_env(4, [101, 202, 303, 404], make_env)
    venv.reset_all()
    vec = [venv.step([a] * 4) for a in actions]

    for t in range(30):
        for i in range(4):
            assert vec[t][i].reward == solo[i][t].reward
            assert vec[t][i].info["d"] == solo[i][t].info["d"]


def test_independent_envs_interleaving_invariant():
    e1 = PointMassEnv(EpisodeConfig(max_steps=100), seed=11)
    e2 = PointMassEnv(EpisodeConfig(max_steps=100), seed=22)
    e1.reset()
    e2.reset()
    a = np.tanh(np.linspace(-1, 1, 9))
    r_fwd = [e1.step(a).reward, e2.step(a).reward]

    f1 = PointMassEnv(EpisodeConfig(max_steps=100), seed=11)
    f2 = PointMassEnv(EpisodeConfig(max_steps=100), seed=22)
    f1.reset()
    f2.reset()
    r_rev = [f2.step(a).reward, f1.step(a).reward]
    assert r_fwd[0] == r_rev[1] and r_fwd[1] == r_rev[0]


def test_episode_fully_deterministic(robot_model, geometry, scene):
    from tripod.cables import CableParams
    from tripod.contact import ContactParams

    def run():
        env = TripodEnv(robot_model, geometry, scene, ContactParams(), CableParams(), EpisodeConfig(), seed=0)
        obs = env.reset(seed=33)
        rng = np.random.default_rng(5)
        chunks = [obs.as_vector()]
        for _ in range(20):
            r = env.step(rng.uniform(-1, 1, 9))
            chunks.append(r.observation.as_vector())
            chunks.append([r.reward, r.info["d"]])
        return np.concatenate([np.atleast_1d(np.asarray(c, dtype=float)).ravel() for c in chunks])

    assert run().tobytes() == run().tobytes()

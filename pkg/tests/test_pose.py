import numpy as np
import pytest

from tripod.physics.model import SimState
from tripod.physics.pose import base_pose, fit_rotation, rotation_to_euler_zyx


def _rot_x(deg):
    a = np.radians(deg)
    return np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])


def _rot_y(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])


def _rot_z(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])


def test_rest_pose_is_identity(robot_model):
    pose = base_pose(robot_model, robot_model.rest_state())
    rest_centroid = robot_model.rest_positions[robot_model.platform_node_ids].mean(axis=0)
    assert np.allclose(pose.position, rest_centroid, atol=1e-12)
    assert np.max(np.abs(pose.angles)) < 1e-9


def test_translation_shifts_position_only(robot_model):
    state = robot_model.rest_state()
    state.positions = state.positions + np.array([10.0, -5.0, 0.0])
    pose = base_pose(robot_model, state)
    rest_centroid = robot_model.rest_positions[robot_model.platform_node_ids].mean(axis=0)
    assert np.allclose(pose.position - rest_centroid, [10.0, -5.0, 0.0], atol=1e-12)
    assert np.max(np.abs(pose.angles)) < 1e-12


def test_rotation_about_x_reports_roll(robot_model):
    # oracle: apply a known rotation matrix to the rest nodes
    state = robot_model.rest_state()
    ids = robot_model.platform_node_ids
    center = robot_model.rest_positions[ids].mean(axis=0)
    state.positions = (state.positions - center) @ _rot_x(30.0).T + center
    pose = base_pose(robot_model, state)
    assert pose[3] == pytest.approx(30.0, abs=1e-6)
    assert abs(pose[4]) < 1e-6 and abs(pose[5]) < 1e-6


@pytest.mark.parametrize("angles", [(10.0, -20.0, 45.0), (-75.0, 30.0, -120.0), (5.0, 0.0, 179.0)])
def test_euler_zyx_roundtrip(angles):
    roll, pitch, yaw = angles
    r = _rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)
    got = rotation_to_euler_zyx(r)
    assert got == pytest.approx((roll, pitch, yaw), abs=1e-9)


def test_angles_stay_in_half_open_range():
    r = _rot_z(180.0)
    roll, pitch, yaw = rotation_to_euler_zyx(r)
    for a in (roll, pitch, yaw):
        assert -180.0 < a <= 180.0
    assert yaw == pytest.approx(180.0, abs=1e-9)


def test_fit_rotation_recovers_random_rotation():
    rng = np.random.default_rng(4)
    rest = rng.standard_normal((12, 3))
    rest -= rest.mean(axis=0)
    r_true = _rot_z(33.0) @ _rot_y(-12.0) @ _rot_x(57.0)
    current = rest @ r_true.T
    r_fit = fit_rotation(rest, current)
    assert np.allclose(r_fit, r_true, atol=1e-10)


def test_fit_rotation_guards_reflection():
    rng = np.random.default_rng(9)
    rest = rng.standard_normal((10, 3))
    rest -= rest.mean(axis=0)
    current = rest @ _rot_x(170.0).T + rng.normal(scale=1e-3, size=rest.shape)
    r_fit = fit_rotation(rest, current)
    assert np.linalg.det(r_fit) == pytest.approx(1.0, abs=1e-9)

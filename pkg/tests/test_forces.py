import numpy as np
import pytest

from tripod.physics.forces import assemble_forces, spring_forces, stiffness_matrix
from tripod.physics.model import SceneParams, SimState, build_bar_model


def test_rest_state_zero_gravity_zero_forces(robot_model):
    scene = SceneParams(gravity=(0.0, 0.0, 0.0))
    f = assemble_forces(robot_model, robot_model.rest_state(), scene)
    assert np.max(np.abs(f)) < 1e-12


def test_single_spring_hooke_value():
    # oracle: k = 160 mN/mm (E=2e6 Pa, A=4, L=50); stretch 0.3 mm -> 48 mN axial
    bar = build_bar_model(2e6, 4.0, 50.0, mass=0.2)
    state = bar.rest_state()
    state.positions[1, 2] -= 0.3  # stretch along the bar axis (-z)
    f = spring_forces(bar, state.positions)
    assert f[0, 2] == pytest.approx(-48.0, rel=1e-12)
    assert f[1, 2] == pytest.approx(48.0, rel=1e-12)
    assert np.allclose(f[0], -f[1])


def test_gravity_only_total_force(robot_model, scene):
    rng = np.random.default_rng(3)
    state = robot_model.rest_state()
    state.positions += rng.normal(scale=1.0, size=state.positions.shape)
    # zero velocity: Rayleigh mass damping vanishes, spring damping cancels pairwise
    f = assemble_forces(robot_model, state, scene)
    total = f.sum(axis=0)
    expected = robot_model.total_mass * scene.gravity_vec
    assert np.linalg.norm(total - expected) < 1e-9 * np.linalg.norm(expected)


def test_internal_forces_cancel_pairwise(robot_model):
    rng = np.random.default_rng(11)
    pos = robot_model.rest_positions + rng.normal(scale=2.0, size=robot_model.rest_positions.shape)
    f = spring_forces(robot_model, pos)
    assert np.linalg.norm(f.sum(axis=0)) < 1e-9


def test_spring_damping_cancels_pairwise(robot_model):
    rng = np.random.default_rng(12)
    state = robot_model.rest_state()
    state.velocities = rng.normal(scale=10.0, size=state.velocities.shape)
    k = stiffness_matrix(robot_model, state.positions)
    damping = (k @ state.velocities.ravel()).reshape(-1, 3)
    assert np.linalg.norm(damping.sum(axis=0)) < 1e-9 * max(np.linalg.norm(damping), 1.0)


def test_nonfinite_state_rejected(robot_model, scene):
    state = robot_model.rest_state()
    state.positions[0, 0] = np.nan
    with pytest.raises(ValueError):
        assemble_forces(robot_model, state, scene)


def test_external_shape_checked(robot_model, scene):
    with pytest.raises(ValueError, match="external"):
        assemble_forces(robot_model, robot_model.rest_state(), scene, external=np.zeros((2, 3)))


def test_stiffness_matrix_symmetric_psd(robot_model):
    rng = np.random.default_rng(5)
    pos = robot_model.rest_positions + rng.normal(scale=1.5, size=robot_model.rest_positions.shape)
    k = stiffness_matrix(robot_model, pos).toarray()
    assert np.allclose(k, k.T, atol=1e-9)
    eig = np.linalg.eigvalsh(k)
    assert eig.min() > -1e-8 * max(eig.max(), 1.0)

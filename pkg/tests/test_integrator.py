import numpy as np
import pytest

from tripod.physics.integrator import CGError, StepError, solve_cg, step_implicit_euler
from tripod.physics.model import (
    SceneParams,
    SimState,
    SoftBodyModel,
    build_bar_model,
    build_leg_model,
)

from conftest import kinetic_energy, total_energy


def _free_node_model(n=1, mass=0.3):
    """Nodes with no springs: pure ballistic motion."""
    return SoftBodyModel(
        rest_positions=np.zeros((n, 3)),
        node_masses=np.full(n, mass / n),
        spring_i=np.zeros(0, dtype=np.int64),
        spring_j=np.zeros(0, dtype=np.int64),
        spring_k=np.zeros(0),
        spring_rest=np.zeros(0),
        platform_node_ids=np.arange(n),
        leg_tip_node_ids=[np.arange(n)],
        cable_waypoint_ids=[np.arange(n)],
        fixed_node_ids=np.zeros(0, dtype=np.int64),
        total_mass=mass,
    )


# ---------------------------------------------------------------------------
# solve_cg


def test_cg_identity_one_iteration():
    calls = []

    def apply_id(x):
        calls.append(1)
        return x

    b = np.array([3.0, -1.0, 2.5])
    x = solve_cg(apply_id, b, tol=1e-12, max_iter=10)
    assert np.allclose(x, b, atol=1e-14)
    assert len(calls) == 1


def test_cg_diagonal_oracle():
    d = np.arange(1.0, 6.0)
    x = solve_cg(lambda v: d * v, np.ones(5), tol=1e-12, max_iter=50)
    # oracle: elementwise division
    assert np.allclose(x, np.array([1.0, 0.5, 1.0 / 3.0, 0.25, 0.2]), atol=1e-10)


def test_cg_matches_dense_solve_on_random_spd():
    rng = np.random.default_rng(17)
    for trial in range(3):
        r = rng.standard_normal((50, 50))
        a = r @ r.T + 50.0 * np.eye(50)
        b = rng.standard_normal(50)
        x = solve_cg(lambda v: a @ v, b, tol=1e-10, max_iter=500)
        x_ref = np.linalg.solve(a, b)  # dense factorization oracle
        assert np.linalg.norm(x - x_ref) <= 1e-8 * np.linalg.norm(x_ref)


def test_cg_zero_rhs_returns_zero():
    assert np.all(solve_cg(lambda v: 2.0 * v, np.zeros(4), 1e-6, 5) == 0.0)


def test_cg_max_iter_error_carries_residual():
    rng = np.random.default_rng(2)
    r = rng.standard_normal((30, 30))
    a = r @ r.T + 1e-3 * np.eye(30)
    with pytest.raises(CGError) as err:
        solve_cg(lambda v: a @ v, rng.standard_normal(30), tol=1e-14, max_iter=2)
    assert err.value.residual > 0


# ---------------------------------------------------------------------------
# step_implicit_euler


def test_zero_force_zero_velocity_fixed_point(robot_model):
    scene = SceneParams(gravity=(0.0, 0.0, 0.0))
    state = robot_model.rest_state()
    for _ in range(5):
        state = step_implicit_euler(robot_model, state, scene)
    assert np.max(np.abs(state.positions - robot_model.rest_positions)) < 1e-12
    assert np.max(np.abs(state.velocities)) < 1e-12


def test_free_fall_velocity_closed_form():
    # implicit Euler on constant force is exact in velocity: v_n = n h g
    model = _free_node_model()
    scene = SceneParams(time_step=0.01)
    state = model.rest_state()
    g = scene.gravity_vec
    for n in range(1, 101):
        state = step_implicit_euler(model, state, scene)
    expected = 100 * scene.time_step * g
    assert np.linalg.norm(state.velocities[0] - expected) <= 1e-10 * np.linalg.norm(expected)


def test_gravity_momentum_consistency():
    # springs and damping zeroed: momentum change per step = total_mass g h
    model = _free_node_model(n=4, mass=0.8)
    scene = SceneParams(time_step=0.005)
    state = model.rest_state()
    state.velocities += np.linspace(0, 1, 12).reshape(4, 3)
    before = (model.node_masses[:, None] * state.velocities).sum(axis=0)
    state = step_implicit_euler(model, state, scene)
    after = (model.node_masses[:, None] * state.velocities).sum(axis=0)
    expected = model.total_mass * scene.gravity_vec * scene.time_step
    assert np.linalg.norm(after - before - expected) <= 1e-9 * np.linalg.norm(expected)


def test_hanging_mass_equilibrium_extension():
    # oracle: static extension = m g / k = 0.1 * 9810 / 160 mm
    bar = build_bar_model(2e6, 4.0, 50.0, mass=0.2, mass_damping=2.0, stiffness_damping=0.01)
    scene = SceneParams(time_step=0.01)
    state = bar.rest_state()
    for _ in range(3000):
        state = step_implicit_euler(bar, state, scene)
    assert np.max(np.abs(state.velocities)) < 1e-6
    extension = (bar.rest_positions[1, 2] - state.positions[1, 2])
    expected = 0.1 * 9810.0 / 160.0
    assert extension == pytest.approx(expected, rel=1e-3)


def test_fixed_nodes_bit_identical(leg_model, scene):
    state = leg_model.rest_state()
    before = state.positions[leg_model.fixed_node_ids].copy()
    for _ in range(50):
        state = step_implicit_euler(leg_model, state, scene)
    after = state.positions[leg_model.fixed_node_ids]
    assert after.tobytes() == before.tobytes()
    assert np.all(state.velocities[leg_model.fixed_node_ids] == 0.0)


def test_step_determinism_bit_identical(leg_model, scene):
    s1 = leg_model.rest_state()
    s2 = leg_model.rest_state()
    for _ in range(10):
        s1 = step_implicit_euler(leg_model, s1, scene)
        s2 = step_implicit_euler(leg_model, s2, scene)
    assert s1.positions.tobytes() == s2.positions.tobytes()
    assert s1.velocities.tobytes() == s2.velocities.tobytes()


def _leg_tip_sag(model, h, t_end):
    scene = SceneParams(time_step=h)
    state = model.rest_state()
    for _ in range(round(t_end / h)):
        state = step_implicit_euler(model, state, scene)
    tip = state.positions[model.leg_tip_node_ids[0]].mean(axis=0)
    rest_tip = model.rest_positions[model.leg_tip_node_ids[0]].mean(axis=0)
    return tip[2] - rest_tip[2]


def test_leg_sag_self_convergence(leg_model):
    # gravity on, no cables: cantilever sag vs 10x finer reference within 2%
    coarse = _leg_tip_sag(leg_model, 1e-3, 0.5)
    fine = _leg_tip_sag(leg_model, 1e-4, 0.5)
    assert coarse < 0  # it sags
    assert abs(coarse - fine) <= 0.02 * abs(fine)


def test_first_order_convergence_trend(leg_model):
    sags = [_leg_tip_sag(leg_model, h, 0.3) for h in (4e-3, 2e-3, 1e-3, 5e-4)]
    diffs = [abs(sags[i + 1] - sags[i]) for i in range(3)]
    assert diffs[1] < diffs[0]
    assert diffs[2] < diffs[1]


def test_kinetic_energy_nonincreasing_rigid_motion(robot_model):
    # damping > 0, zero gravity, zero actuation; rigid drift keeps springs at rest
    scene = SceneParams(gravity=(0.0, 0.0, 0.0))
    state = robot_model.rest_state()
    state.velocities[:] = np.array([30.0, -20.0, 10.0])
    prev = kinetic_energy(robot_model, state)
    for _ in range(50):
        state = step_implicit_euler(robot_model, state, scene)
        ke = kinetic_energy(robot_model, state)
        assert ke <= prev + 1e-12 * max(prev, 1.0)
        prev = ke


def test_total_energy_dissipates(robot_model):
    scene = SceneParams(gravity=(0.0, 0.0, 0.0))
    rng = np.random.default_rng(8)
    state = robot_model.rest_state()
    state.velocities = rng.normal(scale=20.0, size=state.velocities.shape)
    prev = total_energy(robot_model, state)
    for _ in range(100):
        state = step_implicit_euler(robot_model, state, scene)
        e = total_energy(robot_model, state)
        assert e <= prev + 1e-9 * max(prev, 1.0)
        prev = e


def test_cg_failure_retries_then_raises(leg_model):
    # an unreachable tolerance forces CG failure at h and both half steps
    scene = SceneParams(time_step=0.01, cg_tolerance=1e-300, cg_max_iterations=2)
    with pytest.raises(StepError) as err:
        step_implicit_euler(leg_model, leg_model.rest_state(), scene)
    assert err.value.residual is not None

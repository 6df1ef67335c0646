import numpy as np
import pytest

from tripod.cables import (
    Cable,
    CableCommand,
    CableParams,
    anchor_direction,
    apply_command,
    cable_forces,
    cable_length,
    cable_tension,
    cable_terms,
    cables_terms,
    route_cables,
)
from tripod.physics.model import SimState, build_bar_model


def test_route_produces_nine_cables(robot_model, geometry):
    cables = route_cables(robot_model, geometry)
    assert len(cables) == 9
    state = robot_model.rest_state()
    for cable in cables:
        assert cable_length(cable, state.positions) == pytest.approx(cable.rest_length, abs=1e-9)
        assert cable.displacement == 0.0


def test_anchor_directions_120_apart(robot_model, geometry):
    cables = route_cables(robot_model, geometry)
    for leg in range(3):
        dirs = [anchor_direction(robot_model, c) for c in cables[3 * leg : 3 * leg + 3]]
        for a in range(3):
            for b in range(a + 1, 3):
                angle = np.degrees(np.arccos(np.clip(dirs[a] @ dirs[b], -1, 1)))
                assert angle == pytest.approx(120.0, abs=1.0)


def test_rest_zero_displacement_zero_force(robot_model, geometry):
    cables = route_cables(robot_model, geometry)
    state = robot_model.rest_state()
    for cable in cables:
        _, forces = cable_forces(cable, state)
        assert np.max(np.abs(forces)) == 0.0


def _straight_cable(k_n_per_mm=1.0):
    bar = build_bar_model(1e6, 1.0, 40.0, mass=0.1)
    cable = Cable(
        waypoint_node_ids=np.array([0, 1]),
        rest_length=40.0,
        displacement=0.0,
        stiffness=k_n_per_mm * 1000.0,  # mN/mm
        displacement_max=25.0,
    )
    return bar, cable


def test_straight_cable_shortening_force():
    # oracle: T = k * delta = 1000 mN/mm * 2 mm = 2000 mN along the segment
    bar, cable = _straight_cable()
    cable = cable.with_displacement(2.0)
    state = bar.rest_state()
    ids, forces = cable_forces(cable, state)
    seg_dir = np.array([0.0, 0.0, -1.0])  # node 0 at origin, node 1 below
    assert np.allclose(forces[0], 2000.0 * seg_dir, atol=1e-9)
    assert np.allclose(forces[1], -2000.0 * seg_dir, atol=1e-9)


def test_cable_never_pushes():
    bar, cable = _straight_cable()
    state = bar.rest_state()
    state.positions[1, 2] += 10.0  # segment shorter than target: slack
    assert cable_tension(cable, state.positions) == 0.0
    _, forces = cable_forces(cable, state)
    assert np.max(np.abs(forces)) == 0.0


def test_tension_monotone_in_displacement(robot_model, geometry):
    cables = route_cables(robot_model, geometry)
    state = robot_model.rest_state()
    prev = -1.0
    for disp in np.linspace(0.0, 10.0, 20):
        t = cable_tension(cables[0].with_displacement(disp), state.positions)
        assert t >= prev - 1e-12
        prev = t


def test_zero_net_force_and_torque(leg_model, geometry):
    cables = route_cables(leg_model, geometry)
    rng = np.random.default_rng(6)
    state = leg_model.rest_state()
    state.positions = state.positions + rng.normal(scale=2.0, size=state.positions.shape)
    cable = cables[1].with_displacement(8.0)
    ids, forces = cable_forces(cable, state)
    assert cable_tension(cable, state.positions) > 0
    net = forces.sum(axis=0)
    torque = np.cross(state.positions[ids], forces).sum(axis=0)
    scale = np.abs(forces).max()
    assert np.linalg.norm(net) < 1e-9 * scale
    assert np.linalg.norm(torque) < 1e-9 * scale * 100.0


def test_apply_command_noop_and_clamp():
    bar, cable = _straight_cable()
    cables = [cable.with_displacement(3.0)] * 9
    same = apply_command(cables, CableCommand(np.full(9, 3.0)))
    assert all(c.displacement == 3.0 for c in same)
    clamped = apply_command(cables, CableCommand(np.full(9, 100.0)))
    assert all(c.displacement == c.displacement_max for c in clamped)


def test_apply_command_slew_limited():
    # oracle: jump of 10 mm, limit 2 mm per step -> exactly 2 mm of motion
    bar, cable = _straight_cable()
    cables = [cable] * 9
    stepped = apply_command(cables, CableCommand(np.full(9, 10.0)), max_delta=2.0)
    assert all(c.displacement == pytest.approx(2.0, abs=1e-15) for c in stepped)


def test_batched_terms_match_single(leg_model, geometry):
    cables = route_cables(leg_model, geometry)
    cables = [c.with_displacement(d) for c, d in zip(cables, (5.0, 0.0, 2.5))]
    rng = np.random.default_rng(13)
    state = leg_model.rest_state()
    state.positions = state.positions + rng.normal(scale=1.0, size=state.positions.shape)
    state.velocities = rng.normal(scale=5.0, size=state.velocities.shape)

    batched = cables_terms(cables, state, leg_model.node_count)
    single = None
    from tripod.physics.forces import ExternalForces

    single = ExternalForces.zero(leg_model.node_count)
    for cable in cables:
        single = single.add(cable_terms(cable, state, leg_model.node_count))
    assert np.allclose(batched.forces, single.forces, atol=1e-12)
    v = rng.normal(size=(leg_model.node_count, 3))
    assert np.allclose(batched.stiffness_apply(v), single.stiffness_apply(v), atol=1e-9)

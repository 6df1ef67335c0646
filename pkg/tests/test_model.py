import json

import numpy as np
import pytest

from tripod.physics.model import (
    ConstructionError,
    MaterialParams,
    RobotGeometry,
    build_bar_model,
    build_leg_model,
    build_robot_model,
    model_from_dict,
    model_to_dict,
)


def test_three_legs_at_120_degrees(robot_model):
    directions = []
    for ids in robot_model.leg_tip_node_ids:
        c = robot_model.rest_positions[ids].mean(axis=0)
        directions.append(np.arctan2(c[1], c[0]))
    degs = sorted(np.degrees(directions) % 360.0)
    gaps = np.diff(degs + [degs[0] + 360.0])
    assert np.all(np.abs(gaps - 120.0) < 1e-9)


def test_total_mass_conserved(robot_model):
    assert abs(robot_model.node_masses.sum() - 0.5) < 1e-12


def test_bar_stiffness_matches_analytic_formula():
    # oracle: k = E A / L with E = 2e6 Pa = 2000 mN/mm^2, A = 4 mm^2, L = 50 mm
    bar = build_bar_model(young_modulus_pa=2e6, cross_section_mm2=4.0, length_mm=50.0, mass=0.2)
    assert len(bar.spring_k) == 1
    assert bar.spring_k[0] == pytest.approx(160.0, rel=1e-12)
    assert bar.spring_rest[0] == pytest.approx(50.0, rel=1e-12)


def test_rest_lengths_match_rest_positions(robot_model):
    d = robot_model.rest_positions[robot_model.spring_j] - robot_model.rest_positions[robot_model.spring_i]
    assert np.allclose(np.linalg.norm(d, axis=1), robot_model.spring_rest, rtol=1e-12)


def test_robot_has_nine_cables_three_tips(robot_model):
    assert len(robot_model.cable_waypoint_ids) == 9
    assert len(robot_model.leg_tip_node_ids) == 3
    for ids in robot_model.cable_waypoint_ids:
        assert len(ids) >= 2
    assert len(robot_model.fixed_node_ids) == 0


def test_leg_model_has_fixed_base(leg_model):
    assert len(leg_model.fixed_node_ids) >= 3
    assert len(leg_model.cable_waypoint_ids) == 3
    base_x = leg_model.rest_positions[leg_model.fixed_node_ids][:, 0]
    assert np.all(np.abs(base_x) < 1e-12)


def test_degenerate_geometry_rejected(material):
    with pytest.raises(ConstructionError, match="platform_thickness"):
        RobotGeometry(platform_thickness=0.0).validate()
    with pytest.raises(ConstructionError, match="axial"):
        RobotGeometry(lattice_resolution=(1, 1, 3)).validate()
    with pytest.raises(ConstructionError, match="multiple of 3"):
        RobotGeometry(lattice_resolution=(4, 1, 4)).validate()
    with pytest.raises(ConstructionError, match="leg_count"):
        RobotGeometry(leg_count=4).validate()


def test_material_validation():
    with pytest.raises(ConstructionError, match="poisson_ratio"):
        MaterialParams(poisson_ratio=0.5).validate()
    with pytest.raises(ConstructionError, match="young_modulus"):
        MaterialParams(young_modulus=0.0).validate()


def test_model_json_roundtrip(robot_model, tmp_path):
    doc = model_to_dict(robot_model)
    text = json.dumps(doc)
    back = model_from_dict(json.loads(text))
    assert np.array_equal(back.rest_positions, robot_model.rest_positions)
    assert np.array_equal(back.spring_k, robot_model.spring_k)
    assert np.array_equal(back.platform_node_ids, robot_model.platform_node_ids)
    assert back.total_mass == robot_model.total_mass
    assert back.rayleigh_mass_damping == robot_model.rayleigh_mass_damping
    back.validate()


def test_model_schema_version_checked(robot_model):
    doc = model_to_dict(robot_model)
    doc["schema_version"] = "bogus/0"
    with pytest.raises(ValueError, match="schema"):
        model_from_dict(doc)


def test_radial_two_adds_axis_nodes(geometry, material):
    geo2 = RobotGeometry(lattice_resolution=(4, 2, 3))
    m1 = build_leg_model(geometry, material, 0.1)
    m2 = build_leg_model(geo2, material, 0.1)
    assert m2.node_count > m1.node_count
    m2.validate()

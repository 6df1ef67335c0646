import numpy as np
import pytest

from tripod.cables import CableParams
from tripod.contact import ContactParams
from tripod.environment import EpisodeConfig, TripodEnv
from tripod.physics.model import (
    MaterialParams,
    RobotGeometry,
    SceneParams,
    build_leg_model,
    build_robot_model,
)


@pytest.fixture(scope="session")
def geometry():
    return RobotGeometry()


@pytest.fixture(scope="session")
def material():
    return MaterialParams()


@pytest.fixture(scope="session")
def scene():
    return SceneParams()


@pytest.fixture(scope="session")
def robot_model(geometry, material):
    return build_robot_model(geometry, material, total_mass=0.5)


@pytest.fixture(scope="session")
def leg_model(geometry, material):
    return build_leg_model(geometry, material, mass=0.15)


@pytest.fixture()
def robot_env(robot_model, geometry, scene):
    return TripodEnv(
        robot_model,
        geometry,
        scene,
        ContactParams(),
        CableParams(),
        EpisodeConfig(),
        seed=0,
    )


def total_energy(model, state):
    """Kinetic + elastic spring energy, for dissipation checks."""
    ke = 0.5 * float(np.sum(model.node_masses[:, None] * state.velocities**2))
    d = state.positions[model.spring_j] - state.positions[model.spring_i]
    length = np.linalg.norm(d, axis=1)
    pe = 0.5 * float(np.sum(model.spring_k * (length - model.spring_rest) ** 2))
    return ke + pe


def kinetic_energy(model, state):
    return 0.5 * float(np.sum(model.node_masses[:, None] * state.velocities**2))

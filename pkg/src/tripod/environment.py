"""Episodic goal-reaching environment around the soft-robot simulation.

Observations expose the platform pose (x, y, z in mm, roll/pitch/yaw in
degrees) and the 2-D goal; actions command the nine cable displacements in
a normalized [-1, 1] range. An episode terminates on reaching the goal and
truncates on the step limit, excessive tilt, or leaving the height band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cables import Cable, CableCommand, CableParams, apply_command, cables_terms, route_cables
from .contact import ContactParams, contact_terms
from .physics.forces import ExternalForces
from .physics.integrator import StepError, step_implicit_euler
from .physics.model import RobotGeometry, SceneParams, SimState, SoftBodyModel
from .physics.pose import Pose, base_pose
from .rng import substream

__all__ = [
    "Observation",
    "EpisodeConfig",
    "StepResult",
    "compute_reward",
    "normalized_action_to_displacements",
    "TripodEnv",
    "vector_env",
    "VectorEnv",
]

OBS_DIM = 8
ACTION_DIM = 9


@dataclass(frozen=True)
class Observation:
    """Agent pose (mm / degrees) and the active 2-D target (mm)."""

    agent_pose: tuple[float, float, float, float, float, float]
    target: tuple[float, float]

    def as_vector(self) -> np.ndarray:
        return np.array([*self.agent_pose, *self.target], dtype=float)


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 1000
    distance_threshold: float = 20.0
    goal_band: tuple[float, float] = (40.0, 100.0)
    height_limits: tuple[float, float] | None = None   # None: (0.4, 1.6) x rest height
    tilt_limit: float = 45.0
    d_max: float = 150.0
    control_substeps: int = 5

    def validate(self) -> None:
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if not 0.0 < self.distance_threshold < self.goal_band[0]:
            raise ValueError(
                f"need 0 < distance_threshold < goal band lower bound, got "
                f"{self.distance_threshold} vs band {self.goal_band}"
            )
        if not self.goal_band[1] > self.goal_band[0] > 0:
            raise ValueError(f"invalid goal band {self.goal_band}")
        if not self.d_max > self.distance_threshold:
            raise ValueError(f"d_max must exceed distance_threshold, got {self.d_max}")
        if self.control_substeps < 1:
            raise ValueError("control_substeps must be >= 1")
        if self.tilt_limit <= 0:
            raise ValueError("tilt_limit must be > 0")


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


def compute_reward(
    pose: Sequence[float],
    velocity: Sequence[float],
    goal: Sequence[float],
    config: EpisodeConfig,
    goal_z: float = 0.0,
) -> float:
    """Proximity / tilt / directed-velocity reward.

    r = 20 (1 - ln(1+d) / ln(1+d_max)) - |roll| - |pitch|
        + v_x sgn(x_g - x) + v_y sgn(y_g - y)

    with d the 3-D distance to (x_g, y_g, goal_z), angles in degrees,
    velocities in mm/s, and sgn(0) = 0.
    """
    x, y, z, roll, pitch = pose[0], pose[1], pose[2], pose[3], pose[4]
    x_g, y_g = goal[0], goal[1]
    v_x, v_y = velocity[0], velocity[1]
    d = math.sqrt((x_g - x) ** 2 + (y_g - y) ** 2 + (goal_z - z) ** 2)
    proximity = 20.0 * (1.0 - math.log1p(d) / math.log1p(config.d_max))
    return proximity - abs(roll) - abs(pitch) + v_x * float(np.sign(x_g - x)) + v_y * float(np.sign(y_g - y))


def goal_distance(pose: Sequence[float], goal: Sequence[float], goal_z: float) -> float:
    return math.sqrt((goal[0] - pose[0]) ** 2 + (goal[1] - pose[1]) ** 2 + (goal_z - pose[2]) ** 2)


def normalized_action_to_displacements(action: np.ndarray, displacement_max: float) -> np.ndarray:
    """Affine [-1, 1] -> [0, displacement_max], clamping out-of-range input."""
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"action must have shape ({ACTION_DIM},), got {a.shape}")
    return (a + 1.0) * 0.5 * displacement_max


def sample_goal(rng: np.random.Generator, band: tuple[float, float]) -> tuple[float, float]:
    """|coordinate| ~ U(band), sign equiprobable, independently per axis."""
    lo, hi = band
    x = rng.uniform(lo, hi) * (1.0 if rng.integers(0, 2) else -1.0)
    y = rng.uniform(lo, hi) * (1.0 if rng.integers(0, 2) else -1.0)
    return float(x), float(y)


class TripodEnv:
    """One robot simulation wrapped as an episodic goal-reaching task."""

    def __init__(
        self,
        model: SoftBodyModel,
        geometry: RobotGeometry,
        scene: SceneParams,
        contact: ContactParams,
        cable_params: CableParams,
        episode: EpisodeConfig,
        seed: int | None = None,
    ):
        episode.validate()
        scene.validate()
        contact.validate()
        self.model = model
        self.geometry = geometry
        self.scene = scene
        self.contact = contact
        self.cable_params = cable_params
        self.episode = episode
        self._rest_cables = route_cables(model, geometry, cable_params)
        rest_pose = base_pose(model, model.rest_state())
        self.rest_height = rest_pose[2]
        self.goal_z = self.rest_height
        self.plane_height = -contact.contact_distance  # built leg tips start at gap 0
        lo, hi = episode.height_limits or (0.4 * self.rest_height, 1.6 * self.rest_height)
        self.height_limits = (lo, hi)
        self.distance_threshold_override: float | None = None  # test/eval hook
        self._rng = substream(seed if seed is not None else 0, "goal")
        self.state: SimState = model.rest_state()
        self.cables: list[Cable] = list(self._rest_cables)
        self.goal: tuple[float, float] = (0.0, 0.0)
        self.step_index = 0
        self._ended = True

    # -- core API ----------------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        """Restore the rest state at the origin and sample a fresh goal."""
        if seed is not None:
            self._rng = substream(seed, "goal")
        self.state = self.model.rest_state()
        self.cables = list(self._rest_cables)
        self.goal = sample_goal(self._rng, self.episode.goal_band)
        self.step_index = 0
        self._ended = False
        return self._observe()

    def step(self, action: np.ndarray) -> StepResult:
        if self._ended:
            raise RuntimeError("step() called on an ended episode; call reset()")
        targets = CableCommand(
            normalized_action_to_displacements(action, self.cable_params.displacement_max)
        )
        h = self.scene.time_step
        max_delta = self.cable_params.rate_limit * h
        before = self._platform_centroid()
        physics_error = False
        for _ in range(self.episode.control_substeps):
            self.cables = apply_command(self.cables, targets, max_delta)
            try:
                self.state = step_implicit_euler(self.model, self.state, self.scene, self._force_provider)
            except (StepError, FloatingPointError, ValueError):
                # solver failure or a blown-up state ends the episode
                physics_error = True
                break
        after = self._platform_centroid()
        dt = self.episode.control_substeps * h
        velocity = (after - before) / dt

        if np.all(np.isfinite(self.state.positions)):
            pose = base_pose(self.model, self.state)
        else:
            pose = None
        if pose is not None and np.all(np.isfinite(pose)) and np.all(np.isfinite(velocity)):
            reward = compute_reward(pose, velocity, self.goal, self.episode, goal_z=self.goal_z)
            d = goal_distance(pose, self.goal, self.goal_z)
        else:
            # blown-up state: report a neutral, finite result and end the episode
            pose = Pose(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            velocity = np.zeros(3)
            reward = 0.0
            d = float("inf")
            physics_error = True
        self.step_index += 1

        threshold = (
            self.distance_threshold_override
            if self.distance_threshold_override is not None
            else self.episode.distance_threshold
        )
        terminated = d <= threshold
        truncated = False
        if not terminated:
            z_ok = self.height_limits[0] <= pose[2] <= self.height_limits[1]
            tilt_ok = abs(pose[3]) <= self.episode.tilt_limit and abs(pose[4]) <= self.episode.tilt_limit
            truncated = (
                physics_error
                or self.step_index >= self.episode.max_steps
                or not z_ok
                or not tilt_ok
            )
        self._ended = terminated or truncated
        info = {
            "d": d,
            "v_x": float(velocity[0]),
            "v_y": float(velocity[1]),
            "step_index": self.step_index,
        }
        if physics_error:
            info["physics_error"] = True
        return StepResult(self._observe(pose), reward, terminated, truncated, info)

    # -- helpers and hooks ---------------------------------------------------

    def _force_provider(self, state: SimState) -> ExternalForces:
        total = contact_terms(
            state,
            self.plane_height,
            self.contact,
            self.model.node_count,
            node_masses=self.model.node_masses,
            dt=self.scene.time_step,
        )
        return total.add(cables_terms(self.cables, state, self.model.node_count))

    def _platform_centroid(self) -> np.ndarray:
        return self.state.positions[self.model.platform_node_ids].mean(axis=0)

    def _observe(self, pose: Pose | None = None) -> Observation:
        pose = pose or base_pose(self.model, self.state)
        return Observation(agent_pose=tuple(pose), target=self.goal)

    def set_goal(self, x: float, y: float, clear_ended: bool = False) -> None:
        """Replace the active goal; with clear_ended, continue the episode
        in place (used by the trajectory runner)."""
        self.goal = (float(x), float(y))
        if clear_ended:
            self._ended = False

    def teleport(self, dx: float, dy: float) -> None:
        """Test hook: rigidly translate the robot in the plane."""
        self.state.positions[:, 0] += dx
        self.state.positions[:, 1] += dy

    @property
    def ended(self) -> bool:
        return self._ended


def vector_env(n: int, seeds: Sequence[int], make_env: Callable[[int], "TripodEnv"]) -> "VectorEnv":
    """n independent environments with independent seed streams."""
    if n < 1:
        raise ValueError("need at least one environment")
    if len(seeds) != n:
        raise ValueError(f"expected {n} seeds, got {len(seeds)}")
    return VectorEnv([make_env(int(s)) for s in seeds])


class VectorEnv:
    """Serial vector of independent environments with auto-reset.

    When an episode ends, the returned StepResult keeps the terminal
    flags/reward and `info["final_observation"]` holds the closing
    observation; the stored observation is from the fresh reset.
    """

    def __init__(self, envs: Sequence[TripodEnv]):
        self.envs = list(envs)

    @property
    def n(self) -> int:
        return len(self.envs)

    def reset_all(self) -> list[Observation]:
        return [env.reset() for env in self.envs]

    def step(self, actions: Sequence[np.ndarray]) -> list[StepResult]:
        results = []
        for env, action in zip(self.envs, actions):
            res = env.step(action)
            if res.terminated or res.truncated:
                res.info["final_observation"] = res.observation
                res.observation = env.reset()
            results.append(res)
        return results

"""Evaluation harness: the 50-goal benchmark, arc-trajectory following,
and a 2-D point-mass environment that exercises the learner without
soft-body physics.

Benchmark reports always carry the published reference numbers (success
rate 0.82, average steps 388.96, average distance 18.762 mm; trajectory
roughly 19 mm deviation in 694 steps) alongside the measured ones. The
references depend on unpublished material and tuning constants, so they
are printed for comparison, never asserted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .environment import (
    ACTION_DIM,
    EpisodeConfig,
    Observation,
    StepResult,
    compute_reward,
    goal_distance,
    sample_goal,
)
from .rng import substream, substream_seed

__all__ = [
    "PAPER_REFERENCE",
    "EpisodeRecord",
    "GoalBenchmarkReport",
    "TrajectoryReport",
    "PointMassEnv",
    "point_mass_env",
    "run_goal_benchmark",
    "run_trajectory",
    "make_arc_waypoints",
    "emit_map",
    "emit_trajectory_map",
    "random_policy",
    "save_report",
]

REPORT_SCHEMA_VERSION = "tripod-report/1"

PAPER_REFERENCE = {
    "goal_benchmark": {"success_rate": 0.82, "average_steps": 388.96, "average_distance_mm": 18.762},
    "trajectory": {"deviation_mm": 19.0, "steps": 694},
}

Policy = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# point-mass oracle environment


class PointMassEnv:
    """A 2-D point mass with velocity-command actions behind the same
    observation/action/reward/termination contract as the robot.

    The 9-D action maps to a planar velocity through a fixed linear blend;
    unused observation dims (z and the angles) stay zero, so the tilt
    penalty and the height/tilt truncations never fire.
    """

    # fixed 2x9 blend: phase pattern over the action vector, rows L1-normalized
    _phases = 2.0 * np.pi * np.arange(ACTION_DIM) / ACTION_DIM
    MIX = np.stack([np.cos(_phases) / np.abs(np.cos(_phases)).sum(),
                    np.sin(_phases) / np.abs(np.sin(_phases)).sum()])

    def __init__(self, episode: EpisodeConfig, seed: int | None = None, v_max: float = 200.0,
                 time_step: float = 0.01):
        episode.validate()
        self.episode = episode
        self.v_max = v_max
        self.dt = episode.control_substeps * time_step
        self.goal_z = 0.0
        self.distance_threshold_override: float | None = None
        self._rng = substream(seed if seed is not None else 0, "goal")
        self.position = np.zeros(2)
        self.goal = (0.0, 0.0)
        self.step_index = 0
        self._ended = True

    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self._rng = substream(seed, "goal")
        self.position = np.zeros(2)
        self.goal = sample_goal(self._rng, self.episode.goal_band)
        self.step_index = 0
        self._ended = False
        return self._observe()

    def step(self, action: np.ndarray) -> StepResult:
        if self._ended:
            raise RuntimeError("step() called on an ended episode; call reset()")
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if a.shape != (ACTION_DIM,):
            raise ValueError(f"action must have shape ({ACTION_DIM},), got {a.shape}")
        v = self.v_max * (self.MIX @ a)
        self.position = self.position + v * self.dt
        self.step_index += 1

        pose = (self.position[0], self.position[1], 0.0, 0.0, 0.0, 0.0)
        reward = compute_reward(pose, (v[0], v[1]), self.goal, self.episode, goal_z=self.goal_z)
        d = goal_distance(pose, self.goal, self.goal_z)
        threshold = (
            self.distance_threshold_override
            if self.distance_threshold_override is not None
            else self.episode.distance_threshold
        )
        terminated = d <= threshold
        truncated = not terminated and self.step_index >= self.episode.max_steps
        self._ended = terminated or truncated
        info = {"d": d, "v_x": float(v[0]), "v_y": float(v[1]), "step_index": self.step_index}
        return StepResult(self._observe(), reward, terminated, truncated, info)

    def _observe(self) -> Observation:
        return Observation(
            agent_pose=(float(self.position[0]), float(self.position[1]), 0.0, 0.0, 0.0, 0.0),
            target=self.goal,
        )

    def set_goal(self, x: float, y: float, clear_ended: bool = False) -> None:
        self.goal = (float(x), float(y))
        if clear_ended:
            self._ended = False

    def teleport(self, dx: float, dy: float) -> None:
        self.position = self.position + np.array([dx, dy])

    @property
    def ended(self) -> bool:
        return self._ended


def point_mass_env(config: EpisodeConfig | None = None, seed: int | None = None, **kwargs) -> PointMassEnv:
    return PointMassEnv(config or EpisodeConfig(), seed=seed, **kwargs)


def random_policy(seed: int, action_dim: int = ACTION_DIM) -> Policy:
    """A frozen random baseline: actions drawn from the same squashed-Gaussian
    family as an untrained agent, deterministic under seed."""
    rng = substream(seed, "random-policy")

    def policy(_obs: np.ndarray) -> np.ndarray:
        return np.tanh(rng.standard_normal(action_dim))

    return policy


# ---------------------------------------------------------------------------
# goal benchmark


@dataclass
class EpisodeRecord:
    goal: tuple[float, float]
    reached: bool
    steps_to_reach: int
    min_distance: float
    best_position: tuple[float, float]
    episode_return: float = 0.0


@dataclass
class GoalBenchmarkReport:
    episodes: list[EpisodeRecord]
    success_rate: float
    average_steps: float
    average_steps_successful: float
    average_min_distance: float
    mean_episode_return: float
    seed: int
    paper_reference: dict = field(default_factory=lambda: dict(PAPER_REFERENCE["goal_benchmark"]))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "goal_benchmark",
            "seed": self.seed,
            "aggregate": {
                "success_rate": self.success_rate,
                "average_steps": self.average_steps,
                "average_steps_successful": self.average_steps_successful,
                "average_min_distance": self.average_min_distance,
                "mean_episode_return": self.mean_episode_return,
            },
            "paper_reference": self.paper_reference,
            "episodes": [
                {
                    "goal": list(e.goal),
                    "reached": e.reached,
                    "steps_to_reach": e.steps_to_reach,
                    "min_distance": e.min_distance,
                    "best_position": list(e.best_position),
                    "episode_return": e.episode_return,
                }
                for e in self.episodes
            ],
        }

    def summary_lines(self) -> list[str]:
        ref = self.paper_reference
        return [
            f"{'metric':<24}{'measured':>12}{'paper':>12}",
            f"{'success_rate':<24}{self.success_rate:>12.3f}{ref['success_rate']:>12.3f}",
            f"{'average_steps':<24}{self.average_steps:>12.2f}{ref['average_steps']:>12.2f}",
            f"{'avg_min_distance_mm':<24}{self.average_min_distance:>12.3f}{ref['average_distance_mm']:>12.3f}",
            f"(average_steps over successful episodes only: {self.average_steps_successful:.2f})",
        ]


def run_goal_benchmark(
    policy: Policy, env, n: int = 50, seed: int = 0, episode_indices: Sequence[int] | None = None
) -> GoalBenchmarkReport:
    """n episodes from rest at the origin, each with a freshly sampled goal;
    the policy runs deterministically (no sampling). Records reach flags,
    steps to reach, and the minimum distance achieved over the episode.

    episode_indices names the seed substreams to run (default 0..n-1); a
    worker pool can split indices across processes and merge by index."""
    indices = list(episode_indices) if episode_indices is not None else list(range(n))
    episodes = []
    for i in indices:
        obs = env.reset(seed=substream_seed(seed, f"episode/{i}"))
        pose = obs.agent_pose
        min_d = goal_distance(pose, obs.target, env.goal_z)
        best = (pose[0], pose[1])
        reached = False
        steps = env.episode.max_steps
        ep_return = 0.0
        while True:
            result = env.step(policy(obs.as_vector()))
            obs = result.observation
            ep_return += result.reward
            if result.info["d"] < min_d:
                min_d = result.info["d"]
                best = (obs.agent_pose[0], obs.agent_pose[1])
            if result.terminated:
                reached = True
                steps = result.info["step_index"]
                break
            if result.truncated:
                steps = result.info["step_index"]
                break
        episodes.append(
            EpisodeRecord(
                goal=tuple(obs.target),
                reached=reached,
                steps_to_reach=int(steps if reached else env.episode.max_steps),
                min_distance=float(min_d),
                best_position=best,
                episode_return=float(ep_return),
            )
        )
    n_reached = sum(e.reached for e in episodes)
    reached_steps = [e.steps_to_reach for e in episodes if e.reached]
    return GoalBenchmarkReport(
        episodes=episodes,
        success_rate=n_reached / len(indices),
        average_steps=float(np.mean([e.steps_to_reach for e in episodes])),
        average_steps_successful=float(np.mean(reached_steps)) if reached_steps else float("nan"),
        average_min_distance=float(np.mean([e.min_distance for e in episodes])),
        mean_episode_return=float(np.mean([e.episode_return for e in episodes])),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# trajectory following


@dataclass
class TrajectoryReport:
    waypoints: list[tuple[float, float]]
    deviations: list[float]
    path: list[tuple[float, float]]
    total_steps: int
    max_deviation: float
    rms_deviation: float
    reached: list[bool]
    seed: int
    paper_reference: dict = field(default_factory=lambda: dict(PAPER_REFERENCE["trajectory"]))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "trajectory",
            "seed": self.seed,
            "waypoints": [list(w) for w in self.waypoints],
            "reached": self.reached,
            "total_steps": self.total_steps,
            "max_deviation": self.max_deviation,
            "rms_deviation": self.rms_deviation,
            "paper_reference": self.paper_reference,
        }

    def summary_lines(self) -> list[str]:
        ref = self.paper_reference
        return [
            f"waypoints reached: {sum(self.reached)}/{len(self.reached)}",
            f"{'metric':<24}{'measured':>12}{'paper':>12}",
            f"{'max_deviation_mm':<24}{self.max_deviation:>12.3f}{ref['deviation_mm']:>12.3f}",
            f"{'total_steps':<24}{self.total_steps:>12d}{ref['steps']:>12d}",
            f"(rms deviation: {self.rms_deviation:.3f} mm)",
        ]


def make_arc_waypoints(radius: float, arc_degrees: float = 90.0, count: int = 8) -> list[tuple[float, float]]:
    """Evenly spaced points on the circle of the given radius, sweeping from
    angle 0 (near (radius, 0)) to arc_degrees counter-clockwise."""
    if count < 2:
        raise ValueError("need at least 2 waypoints")
    angles = np.radians(np.linspace(0.0, arc_degrees, count))
    return [(float(radius * math.cos(a)), float(radius * math.sin(a))) for a in angles]


def _point_to_polyline(p: np.ndarray, polyline: np.ndarray) -> float:
    if len(polyline) == 1:
        return float(np.linalg.norm(p - polyline[0]))
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    denom = np.maximum(np.einsum("sd,sd->s", ab, ab), 1e-300)
    t = np.clip(np.einsum("sd,sd->s", p[None, :] - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - p[None, :], axis=1)))


def run_trajectory(
    policy: Policy,
    env,
    waypoints: Sequence[tuple[float, float]],
    seed: int = 0,
    max_steps_per_goal: int | None = None,
) -> TrajectoryReport:
    """Present the waypoints sequentially as goals within one continuous run;
    a waypoint is passed when the agent comes within the distance threshold.
    Deviation per step is the planar distance to the reference polyline."""
    if not len(waypoints):
        raise ValueError("waypoints must be nonempty")
    budget = max_steps_per_goal or env.episode.max_steps
    poly = np.asarray(waypoints, dtype=float)
    obs = env.reset(seed=substream_seed(seed, "trajectory"))
    env.set_goal(*waypoints[0])
    obs = env._observe() if hasattr(env, "_observe") else obs

    reached = [False] * len(waypoints)
    deviations: list[float] = []
    path: list[tuple[float, float]] = []
    total_steps = 0
    active = 0
    steps_on_goal = 0
    while True:
        result = env.step(policy(obs.as_vector()))
        obs = result.observation
        total_steps += 1
        steps_on_goal += 1
        p = np.array([obs.agent_pose[0], obs.agent_pose[1]])
        path.append((float(p[0]), float(p[1])))
        deviations.append(_point_to_polyline(p, poly))
        if result.terminated:
            reached[active] = True
            active += 1
            if active >= len(waypoints):
                break
            env.set_goal(*waypoints[active], clear_ended=True)
            steps_on_goal = 0
        elif result.truncated or steps_on_goal >= budget:
            break  # agent fell or ran out of budget; remaining waypoints unreached
    dev = np.asarray(deviations) if deviations else np.zeros(1)
    return TrajectoryReport(
        waypoints=[tuple(w) for w in waypoints],
        deviations=[float(d) for d in deviations],
        path=path,
        total_steps=total_steps,
        max_deviation=float(dev.max()),
        rms_deviation=float(np.sqrt(np.mean(dev**2))),
        reached=reached,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# report emission (SVG + CSV)


def _svg_header(size: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]


def _mapper(extent: float, size: int):
    half = size / 2.0
    scale = half / extent

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (half + x * scale, half - y * scale)

    return to_px


def emit_map(report: GoalBenchmarkReport, svg_path: str, csv_path: str, size: int = 600) -> None:
    """Scatter of goals and best agent positions: green dots for reached
    goals, red for failed, each pair joined by a faded blue line."""
    if not report.episodes:
        raise ValueError("report has no episodes")
    extent = 1.15 * max(
        max(abs(v) for e in report.episodes for v in (*e.goal, *e.best_position)), 1.0
    )
    to_px = _mapper(extent, size)
    parts = _svg_header(size)
    ox, oy = to_px(0.0, 0.0)
    parts.append(f'<circle cx="{ox}" cy="{oy}" r="3" fill="black"/>')
    for e in report.episodes:
        gx, gy = to_px(*e.goal)
        bx, by = to_px(*e.best_position)
        color = "green" if e.reached else "red"
        parts.append(
            f'<line x1="{gx:.2f}" y1="{gy:.2f}" x2="{bx:.2f}" y2="{by:.2f}" '
            f'stroke="blue" stroke-opacity="0.25" stroke-width="1"/>'
        )
        parts.append(f'<circle cx="{gx:.2f}" cy="{gy:.2f}" r="5" fill="{color}"/>')
        parts.append(f'<circle cx="{bx:.2f}" cy="{by:.2f}" r="3" fill="{color}" fill-opacity="0.5"/>')
    parts.append("</svg>")
    with open(svg_path, "w") as f:
        f.write("\n".join(parts))

    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["episode", "goal_x", "goal_y", "reached", "steps_to_reach", "min_distance", "best_x", "best_y"]
        )
        for i, e in enumerate(report.episodes):
            writer.writerow(
                [i, repr(e.goal[0]), repr(e.goal[1]), int(e.reached), e.steps_to_reach,
                 repr(e.min_distance), repr(e.best_position[0]), repr(e.best_position[1])]
            )


def emit_trajectory_map(report: TrajectoryReport, svg_path: str, csv_path: str, size: int = 600) -> None:
    """Reference polyline, waypoints, and the agent's path."""
    pts = report.waypoints + report.path
    extent = 1.15 * max(max(abs(v) for p in pts for v in p), 1.0)
    to_px = _mapper(extent, size)
    parts = _svg_header(size)
    ref = " ".join(f"{to_px(*w)[0]:.2f},{to_px(*w)[1]:.2f}" for w in report.waypoints)
    parts.append(f'<polyline points="{ref}" fill="none" stroke="gray" stroke-dasharray="6 4" stroke-width="2"/>')
    if report.path:
        agent = " ".join(f"{to_px(*p)[0]:.2f},{to_px(*p)[1]:.2f}" for p in report.path)
        parts.append(f'<polyline points="{agent}" fill="none" stroke="blue" stroke-width="1.5"/>')
    for w, ok in zip(report.waypoints, report.reached):
        x, y = to_px(*w)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="{"green" if ok else "red"}"/>')
    parts.append("</svg>")
    with open(svg_path, "w") as f:
        f.write("\n".join(parts))

    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "x", "y", "deviation"])
        for i, (p, d) in enumerate(zip(report.path, report.deviations)):
            writer.writerow([i, repr(p[0]), repr(p[1]), repr(d)])


def save_report(report, path: str) -> None:
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)

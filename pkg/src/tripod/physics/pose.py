"""Rigid pose of the platform from its deformed node set.

Position is the centroid of the feedback nodes; orientation is the
least-squares rotation (orthogonal Procrustes / Kabsch with reflection
guard) aligning the rest shape to the current shape, reported as intrinsic
Z-Y-X Euler angles in degrees: roll about x, pitch about y, yaw about z.
"""

from __future__ import annotations

import math

import numpy as np

from .model import SimState, SoftBodyModel

__all__ = ["Pose", "fit_rotation", "rotation_to_euler_zyx", "base_pose"]


class Pose(tuple):
    """(x, y, z, roll, pitch, yaw); lengths mm, angles degrees."""

    __slots__ = ()

    def __new__(cls, x, y, z, roll, pitch, yaw):
        return super().__new__(cls, (float(x), float(y), float(z), float(roll), float(pitch), float(yaw)))

    @property
    def position(self) -> np.ndarray:
        return np.array(self[:3])

    @property
    def angles(self) -> np.ndarray:
        return np.array(self[3:])


def fit_rotation(rest: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Best-fit rotation R with current ~ R @ rest (both centered)."""
    h = rest.T @ current
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d])
    return vt.T @ correction @ u.T


def rotation_to_euler_zyx(r: np.ndarray) -> tuple[float, float, float]:
    """Decompose R = Rz(yaw) Ry(pitch) Rx(roll); degrees, in (-180, 180]."""
    pitch = math.atan2(-r[2, 0], math.hypot(r[2, 1], r[2, 2]))
    if abs(abs(r[2, 0]) - 1.0) < 1e-12:
        # gimbal lock: split the remaining rotation arbitrarily into roll
        roll = math.atan2(-r[1, 2], r[1, 1])
        yaw = 0.0
    else:
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
    out = []
    for a in (roll, pitch, yaw):
        deg = math.degrees(a)
        if deg <= -180.0:
            deg += 360.0
        out.append(deg)
    return out[0], out[1], out[2]


def base_pose(model: SoftBodyModel, state: SimState) -> Pose:
    """Pose of the platform feedback node set in the current state."""
    ids = model.platform_node_ids
    rest = model.rest_positions[ids]
    current = state.positions[ids]
    centroid = current.mean(axis=0)
    r = fit_rotation(rest - rest.mean(axis=0), current - centroid)
    roll, pitch, yaw = rotation_to_euler_zyx(r)
    return Pose(centroid[0], centroid[1], centroid[2], roll, pitch, yaw)

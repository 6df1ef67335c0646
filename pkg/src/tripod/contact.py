"""Ground-plane contact: proximity-gated penalty normal force with
regularized Coulomb friction.

Nodes closer to the plane than alarm_distance are candidate contacts; a
node generates force once it sinks below contact_distance. The normal
response is a stiff one-sided spring; the tangential response opposes
sliding, capped by the friction cone and ramped linearly below the
regularization velocity so near-stick states stay smooth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics.forces import ExternalForces
from .physics.model import ConstructionError, SimState
from .units import N_PER_MM_TO_MN_PER_MM

__all__ = ["ContactParams", "detect_contacts", "contact_forces", "contact_terms"]

_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ContactParams:
    """alarm/contact distances in mm, normal stiffness in N/mm,
    regularization velocity in mm/s."""

    alarm_distance: float = 5.0
    contact_distance: float = 1.0
    friction_coef: float = 0.8
    normal_stiffness: float = 20.0
    tangential_regularization_velocity: float = 1.0

    def validate(self) -> None:
        if not self.alarm_distance > self.contact_distance >= 0.0:
            raise ConstructionError(
                f"need alarm_distance > contact_distance >= 0, got "
                f"{self.alarm_distance} / {self.contact_distance}"
            )
        if self.friction_coef < 0:
            raise ConstructionError(f"friction_coef must be >= 0, got {self.friction_coef}")
        if self.normal_stiffness <= 0:
            raise ConstructionError(f"normal_stiffness must be > 0, got {self.normal_stiffness}")
        if self.tangential_regularization_velocity <= 0:
            raise ConstructionError("tangential_regularization_velocity must be > 0")

    @property
    def normal_stiffness_internal(self) -> float:
        """mN/mm."""
        return self.normal_stiffness * N_PER_MM_TO_MN_PER_MM


def detect_contacts(
    state: SimState, plane_height: float, params: ContactParams
) -> list[tuple[int, float]]:
    """Nodes within alarm_distance of the plane, with signed gap relative to
    contact_distance (negative = penetrating the contact surface)."""
    height = state.positions[:, 2] - plane_height
    near = np.nonzero(height < params.alarm_distance)[0]
    gaps = height[near] - params.contact_distance
    return [(int(i), float(g)) for i, g in zip(near, gaps)]


def contact_forces(
    contacts: list[tuple[int, float]], state: SimState, params: ContactParams
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse per-node contact response: (node_ids, (k, 3) forces in mN)."""
    if not contacts:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3))
    ids = np.array([c[0] for c in contacts], dtype=np.int64)
    gaps = np.array([c[1] for c in contacts])
    k_n = params.normal_stiffness_internal
    normal = k_n * np.clip(-gaps, 0.0, None)

    v = state.velocities[ids]
    v_t = v.copy()
    v_t[:, 2] = 0.0
    speed = np.hypot(v_t[:, 0], v_t[:, 1])
    v_reg = params.tangential_regularization_velocity
    # |f_t| = mu * N * min(1, |v_t| / v_reg), opposing the sliding direction
    f_t_mag = params.friction_coef * normal * np.minimum(1.0, speed / v_reg)
    direction = np.zeros_like(v_t)
    moving = speed > 0.0
    direction[moving] = -v_t[moving] / speed[moving, None]

    forces = normal[:, None] * _UP[None, :] + f_t_mag[:, None] * direction
    return ids, forces


def contact_terms(
    state: SimState,
    plane_height: float,
    params: ContactParams,
    n_nodes: int,
    node_masses: np.ndarray | None = None,
    dt: float | None = None,
) -> ExternalForces:
    """Dense contact contribution with PSD linearization for the implicit
    solve: normal penalty stiffness along z and tangential viscous damping
    in the regularized (near-stick) regime.

    With node_masses and dt given, the sliding friction magnitude is
    additionally capped at m |v_t| / dt so one step can stop a sliding node
    but never reverse it (removes stick-slip chatter at large normal loads).
    """
    contacts = detect_contacts(state, plane_height, params)
    dense = np.zeros((n_nodes, 3))
    if not contacts:
        return ExternalForces(forces=dense)
    ids, forces = contact_forces(contacts, state, params)
    if node_masses is not None and dt is not None:
        v = state.velocities[ids]
        speed = np.hypot(v[:, 0], v[:, 1])
        f_t = np.hypot(forces[:, 0], forces[:, 1])
        cap = node_masses[ids] * speed / dt
        scale = np.ones_like(f_t)
        over = f_t > cap
        scale[over] = cap[over] / f_t[over]
        forces = forces.copy()
        forces[:, 0] *= scale
        forces[:, 1] *= scale
    np.add.at(dense, ids, forces)

    gaps = np.array([c[1] for c in contacts])
    active = gaps < 0.0
    if not np.any(active):
        return ExternalForces(forces=dense)
    k_n = params.normal_stiffness_internal
    act_ids = ids[active]
    normal = k_n * -gaps[active]
    stiff = np.zeros((n_nodes, 3, 3))
    damp = np.zeros((n_nodes, 3, 3))
    v_reg = params.tangential_regularization_velocity
    stiff[act_ids, 2, 2] = k_n
    # tangential slope mu*N/v_reg while inside the viscous ramp
    v = state.velocities[act_ids]
    speed = np.hypot(v[:, 0], v[:, 1])
    c_t = np.where(speed < v_reg, params.friction_coef * normal / v_reg, 0.0)
    damp[act_ids, 0, 0] = c_t
    damp[act_ids, 1, 1] = c_t
    return ExternalForces(forces=dense, stiffness_blocks=stiff, damping_blocks=damp)

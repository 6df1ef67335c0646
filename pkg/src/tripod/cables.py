"""Cable actuation: nine pulling tendons, three per leg.

Each cable is a polyline threaded through one lattice node per axial ring.
Commanding a length displacement shortens the cable's target length; the
cable responds like a stiff elastic servo, pulling its waypoints along the
polyline segments. Cables only pull: tension is clamped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .physics.forces import ExternalForces, PairStiffness, RankOneStiffness
from .physics.model import ConstructionError, RobotGeometry, SimState, SoftBodyModel
from .units import N_PER_MM_TO_MN_PER_MM

__all__ = [
    "CableParams",
    "Cable",
    "CableCommand",
    "route_cables",
    "cable_length",
    "cable_tension",
    "cable_forces",
    "cable_terms",
    "cables_terms",
    "apply_command",
    "anchor_direction",
]


@dataclass(frozen=True)
class CableParams:
    """Servo-side properties shared by all nine cables.

    stiffness in N/mm (converted internally), displacement_max in mm,
    rate_limit in mm/s.
    """

    stiffness: float = 50.0
    displacement_max: float = 25.0
    rate_limit: float = 40.0

    def validate(self) -> None:
        if self.stiffness <= 0:
            raise ConstructionError(f"cable stiffness must be > 0, got {self.stiffness}")
        if self.displacement_max <= 0:
            raise ConstructionError(f"displacement_max must be > 0, got {self.displacement_max}")
        if self.rate_limit <= 0:
            raise ConstructionError(f"rate_limit must be > 0, got {self.rate_limit}")

    @property
    def stiffness_internal(self) -> float:
        """mN/mm."""
        return self.stiffness * N_PER_MM_TO_MN_PER_MM


@dataclass(frozen=True)
class Cable:
    """One tendon: ordered waypoints, rest polyline length, commanded shortening."""

    waypoint_node_ids: np.ndarray
    rest_length: float
    displacement: float
    stiffness: float        # mN/mm
    displacement_max: float

    def with_displacement(self, value: float) -> "Cable":
        return replace(self, displacement=float(np.clip(value, 0.0, self.displacement_max)))


@dataclass(frozen=True)
class CableCommand:
    """Target displacements for the nine cables, mm."""

    displacements: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.displacements, dtype=float)
        if arr.shape != (9,):
            raise ValueError(f"expected 9 cable displacements, got shape {arr.shape}")
        object.__setattr__(self, "displacements", arr)


def route_cables(
    model: SoftBodyModel, geometry: RobotGeometry, params: CableParams | None = None
) -> list[Cable]:
    """Materialize the model's cable waypoint chains as Cable objects.

    Verifies that within each leg the three anchors sit 120 degrees apart
    around the cross-section (within 1 degree).
    """
    params = params or CableParams()
    params.validate()
    chains = model.cable_waypoint_ids
    if len(chains) % 3 != 0:
        raise ConstructionError(f"expected cables in groups of 3 per leg, got {len(chains)}")
    cables = []
    for ids in chains:
        if len(ids) < 2:
            raise ConstructionError("cable needs at least 2 waypoints")
        if np.any(ids[1:] == ids[:-1]):
            raise ConstructionError("cable repeats a waypoint consecutively")
        pts = model.rest_positions[ids]
        rest_len = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
        cables.append(
            Cable(
                waypoint_node_ids=np.asarray(ids, dtype=np.int64),
                rest_length=rest_len,
                displacement=0.0,
                stiffness=params.stiffness_internal,
                displacement_max=params.displacement_max,
            )
        )
    for leg in range(len(cables) // 3):
        trio = cables[3 * leg : 3 * leg + 3]
        dirs = [anchor_direction(model, c) for c in trio]
        for a in range(3):
            for b in range(a + 1, 3):
                angle = np.degrees(np.arccos(np.clip(dirs[a] @ dirs[b], -1.0, 1.0)))
                if abs(angle - 120.0) > 1.0:
                    raise ConstructionError(
                        f"cable anchors of leg {leg} separated by {angle:.2f} degrees; "
                        "lattice too coarse for three 120-degree cable positions"
                    )
    return cables


def anchor_direction(model: SoftBodyModel, cable: Cable) -> np.ndarray:
    """Unit vector from the leg axis to the cable's tip anchor, in the
    cross-section plane (perpendicular to the leg axis)."""
    ids = cable.waypoint_node_ids
    pts = model.rest_positions[ids]
    axis = pts[-1] - pts[0]
    axis = axis / np.linalg.norm(axis)
    tip_ring = None
    for ring in model.leg_tip_node_ids:
        if ids[-1] in ring:
            tip_ring = ring
            break
    if tip_ring is None:
        raise ConstructionError("cable tip waypoint is not part of any leg tip ring")
    center = model.rest_positions[tip_ring].mean(axis=0)
    offset = model.rest_positions[ids[-1]] - center
    offset = offset - (offset @ axis) * axis
    norm = np.linalg.norm(offset)
    if norm < 1e-9:
        raise ConstructionError("cable anchor coincides with the leg axis")
    return offset / norm


def cable_length(cable: Cable, positions: np.ndarray) -> float:
    pts = positions[cable.waypoint_node_ids]
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def cable_tension(cable: Cable, positions: np.ndarray) -> float:
    """T = k * max(0, current_length - (rest_length - displacement)), mN."""
    target = cable.rest_length - cable.displacement
    return cable.stiffness * max(0.0, cable_length(cable, positions) - target)


def cable_forces(cable: Cable, state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Sparse per-node forces of one cable: (node_ids, (k, 3) forces in mN).

    Tension acts along every polyline segment; interior waypoints receive
    the vector sum of the two adjacent segment pulls.
    """
    ids = cable.waypoint_node_ids
    pts = state.positions[ids]
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite positions in cable force evaluation")
    t = cable_tension(cable, state.positions)
    forces = np.zeros_like(pts)
    if t > 0.0:
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        u = seg / np.maximum(seg_len, 1e-12)[:, None]
        forces[:-1] += t * u
        forces[1:] -= t * u
    return ids, forces


def cable_terms(cable: Cable, state: SimState, n_nodes: int) -> ExternalForces:
    """Force contribution of one cable plus its exact PSD linearization.

    A taut cable's force is -k * (L - target) * grad L; its negated Jacobian
    splits into the servo term k * g g^T (rank one over the waypoints) and
    the geometric term (T / l)(I - u u^T) per segment, both PSD. Carrying
    them in the implicit system keeps the stiff servo stable.
    """
    ids, forces = cable_forces(cable, state)
    dense = np.zeros((n_nodes, 3))
    np.add.at(dense, ids, forces)
    tension = cable_tension(cable, state.positions)
    if tension <= 0.0:
        return ExternalForces(forces=dense)

    pts = state.positions[ids]
    seg = np.diff(pts, axis=0)
    seg_len = np.maximum(np.linalg.norm(seg, axis=1), 1e-12)
    u = seg / seg_len[:, None]
    grad = np.zeros_like(pts)
    grad[:-1] -= u
    grad[1:] += u
    eye = np.eye(3)[None, :, :]
    geo_blocks = (tension / seg_len)[:, None, None] * (eye - u[:, :, None] * u[:, None, :])
    return ExternalForces(
        forces=dense,
        pair_stiffness=[PairStiffness(node_i=ids[:-1], node_j=ids[1:], blocks=geo_blocks)],
        rank_one=[RankOneStiffness(node_ids=ids, gradient=grad, coefficient=cable.stiffness)],
    )


def cables_terms(cables: list[Cable], state: SimState, n_nodes: int) -> ExternalForces:
    """Batched cable_terms over cables with equal waypoint counts (the fast
    path used by the environment's per-substep force provider)."""
    if not cables:
        return ExternalForces.zero(n_nodes)
    widths = {len(c.waypoint_node_ids) for c in cables}
    if len(widths) != 1:
        total = ExternalForces.zero(n_nodes)
        for cable in cables:
            total = total.add(cable_terms(cable, state, n_nodes))
        return total

    ids = np.stack([c.waypoint_node_ids for c in cables])          # (c, w)
    pts = state.positions[ids]                                     # (c, w, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite positions in cable force evaluation")
    seg = np.diff(pts, axis=1)                                     # (c, w-1, 3)
    seg_len = np.maximum(np.sqrt(np.einsum("cwd,cwd->cw", seg, seg)), 1e-12)
    u = seg / seg_len[..., None]
    lengths = seg_len.sum(axis=1)
    stiffness = np.array([c.stiffness for c in cables])
    target = np.array([c.rest_length - c.displacement for c in cables])
    tension = stiffness * np.clip(lengths - target, 0.0, None)     # (c,)

    fseg = tension[:, None, None] * u
    dense = np.zeros((n_nodes, 3))
    head = ids[:, :-1].ravel()
    tail = ids[:, 1:].ravel()
    np.add.at(dense, np.concatenate([head, tail]), np.concatenate([fseg.reshape(-1, 3), -fseg.reshape(-1, 3)]))

    pair_stiffness: list[PairStiffness] = []
    rank_one: list[RankOneStiffness] = []
    taut = np.nonzero(tension > 0.0)[0]
    if len(taut):
        eye = np.eye(3)[None, None, :, :]
        geo = (tension[:, None] / seg_len)[..., None, None] * (eye - u[..., :, None] * u[..., None, :])
        pair_stiffness.append(
            PairStiffness(
                node_i=ids[taut, :-1].ravel(),
                node_j=ids[taut, 1:].ravel(),
                blocks=geo[taut].reshape(-1, 3, 3),
            )
        )
        grad = np.zeros_like(pts)
        grad[:, :-1] -= u
        grad[:, 1:] += u
        for c in taut:
            rank_one.append(
                RankOneStiffness(node_ids=ids[c], gradient=grad[c], coefficient=float(stiffness[c]))
            )
    return ExternalForces(forces=dense, pair_stiffness=pair_stiffness, rank_one=rank_one)


def apply_command(
    cables: list[Cable], command: CableCommand, max_delta: float = np.inf
) -> list[Cable]:
    """Move each displacement toward its command, slew-limited to max_delta
    per call and clamped to [0, displacement_max]."""
    out = []
    for cable, target in zip(cables, command.displacements):
        step = min(max(float(target) - cable.displacement, -max_delta), max_delta)
        if step == 0.0:
            out.append(cable)
        else:
            out.append(cable.with_displacement(cable.displacement + step))
    return out

"""Procedural tripedal robot builder and the mass-spring model it produces.

The deformable body is a lattice of point masses joined by linear springs.
Edge stiffnesses are derived from (Young's modulus, Poisson ratio) with a
volumetric weighting rule: every lattice cell of volume V contributes a
stiffness budget E*V that is split between the cell's axis-aligned edges
and its diagonal braces, each edge receiving share / L^2.  The Poisson
ratio sets the fraction routed to the braces.  This is a deliberate,
documented approximation of a continuum elastic solid; it keeps the
(E, nu) parameterization without a finite-element assembly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..units import PA_TO_MN_PER_MM2

MODEL_SCHEMA_VERSION = "tripod-model/1"

__all__ = [
    "ConstructionError",
    "MaterialParams",
    "SceneParams",
    "RobotGeometry",
    "SoftBodyModel",
    "SimState",
    "build_robot_model",
    "build_leg_model",
    "build_bar_model",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


class ConstructionError(ValueError):
    """Raised when geometry or material parameters cannot produce a valid model."""


@dataclass(frozen=True)
class MaterialParams:
    """Elastic material description. Young's modulus in Pa, density in kg/m^3."""

    young_modulus: float = 3.5e6
    poisson_ratio: float = 0.45
    density: float = 1200.0
    rayleigh_mass_damping: float = 0.1
    rayleigh_stiffness_damping: float = 0.01

    def validate(self) -> None:
        if not self.young_modulus > 0:
            raise ConstructionError(f"young_modulus must be > 0, got {self.young_modulus}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ConstructionError(f"poisson_ratio must be in [0, 0.5), got {self.poisson_ratio}")
        if not self.density > 0:
            raise ConstructionError(f"density must be > 0, got {self.density}")
        if self.rayleigh_mass_damping < 0 or self.rayleigh_stiffness_damping < 0:
            raise ConstructionError("Rayleigh damping coefficients must be >= 0")

    @property
    def young_modulus_internal(self) -> float:
        """E in mN/mm^2."""
        return self.young_modulus * PA_TO_MN_PER_MM2


@dataclass(frozen=True)
class SceneParams:
    """Integrator-facing scene settings. Gravity in mm/s^2, time step in s."""

    gravity: tuple[float, float, float] = (0.0, 0.0, -9810.0)
    time_step: float = 0.01
    cg_tolerance: float = 1e-6
    cg_max_iterations: int = 200

    def validate(self) -> None:
        if not self.time_step > 0:
            raise ConstructionError(f"time_step must be > 0, got {self.time_step}")
        if not self.cg_tolerance > 0:
            raise ConstructionError(f"cg_tolerance must be > 0, got {self.cg_tolerance}")
        if self.cg_max_iterations < 1:
            raise ConstructionError(f"cg_max_iterations must be >= 1, got {self.cg_max_iterations}")

    @property
    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


@dataclass(frozen=True)
class RobotGeometry:
    """Dimensions of the procedural robot, all lengths in mm.

    lattice_resolution is (axial rings per leg, radial shells, nodes per ring).
    Nodes per ring must be a positive multiple of 3 so that the three cables
    of a leg can anchor at 120 degree spacing.
    """

    leg_length: float = 80.0
    leg_radius: float = 12.0
    leg_count: int = 3
    leg_mount_angle_spacing: float = 120.0
    platform_radius: float = 45.0
    platform_thickness: float = 10.0
    lattice_resolution: tuple[int, int, int] = (4, 1, 3)

    def validate(self) -> None:
        for name in ("leg_length", "leg_radius", "platform_radius", "platform_thickness"):
            if not getattr(self, name) > 0:
                raise ConstructionError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.leg_count != 3:
            raise ConstructionError(f"leg_count is fixed at 3, got {self.leg_count}")
        if abs(self.leg_mount_angle_spacing - 120.0) > 1e-12:
            raise ConstructionError(
                f"leg_mount_angle_spacing is fixed at 120 degrees, got {self.leg_mount_angle_spacing}"
            )
        axial, radial, circ = self.lattice_resolution
        if axial < 2:
            raise ConstructionError(f"lattice_resolution axial must give >= 2 rings per leg, got {axial}")
        if radial not in (1, 2):
            raise ConstructionError(f"lattice_resolution radial supports 1 (shell) or 2 (shell+axis), got {radial}")
        if circ < 3 or circ % 3 != 0:
            raise ConstructionError(
                f"lattice_resolution circumferential must be a multiple of 3 (>= 3) to place "
                f"three cables at 120 degrees, got {circ}"
            )

    @property
    def leg_cross_section_area(self) -> float:
        return math.pi * self.leg_radius**2


@dataclass
class SoftBodyModel:
    """Discretized elastic robot: node lattice, spring topology, index sets.

    Immutable after build; safe to share read-only between workers.
    Spring stiffnesses are stored in internal units (mN/mm).
    """

    rest_positions: np.ndarray          # (n, 3) mm
    node_masses: np.ndarray             # (n,) kg
    spring_i: np.ndarray                # (m,) int
    spring_j: np.ndarray                # (m,) int
    spring_k: np.ndarray                # (m,) mN/mm
    spring_rest: np.ndarray             # (m,) mm
    platform_node_ids: np.ndarray       # pose feedback node set
    leg_tip_node_ids: list[np.ndarray]  # one set per leg
    cable_waypoint_ids: list[np.ndarray]  # ordered, platform side first
    fixed_node_ids: np.ndarray          # empty for the free-floating robot
    total_mass: float
    rayleigh_mass_damping: float = 0.0   # baked from MaterialParams at build
    rayleigh_stiffness_damping: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._cache: dict = {}

    @property
    def node_count(self) -> int:
        return len(self.rest_positions)

    @property
    def springs(self) -> list[tuple[int, int, float, float]]:
        """(i, j, stiffness, rest_length) tuples, for inspection and dumps."""
        return list(
            zip(
                self.spring_i.tolist(),
                self.spring_j.tolist(),
                self.spring_k.tolist(),
                self.spring_rest.tolist(),
            )
        )

    def rest_state(self) -> "SimState":
        return SimState(
            positions=self.rest_positions.copy(),
            velocities=np.zeros_like(self.rest_positions),
            time=0.0,
        )

    def validate(self) -> None:
        n = self.node_count
        if n < 2:
            raise ConstructionError("model needs at least 2 nodes")
        if len(self.node_masses) != n:
            raise ConstructionError("node_masses length mismatch")
        if np.any(self.node_masses <= 0):
            raise ConstructionError("node masses must be positive")
        if abs(float(self.node_masses.sum()) - self.total_mass) > 1e-9 * max(1.0, self.total_mass):
            raise ConstructionError("node masses do not sum to total mass")
        for ids in [self.platform_node_ids, self.fixed_node_ids, *self.leg_tip_node_ids, *self.cable_waypoint_ids]:
            if len(ids) and (ids.min() < 0 or ids.max() >= n):
                raise ConstructionError("index set out of node range")
        for ids in [self.platform_node_ids, *self.leg_tip_node_ids, *self.cable_waypoint_ids]:
            if len(ids) == 0:
                raise ConstructionError("index set unexpectedly empty")
        d = self.rest_positions[self.spring_j] - self.rest_positions[self.spring_i]
        lengths = np.linalg.norm(d, axis=1)
        if np.any(lengths <= 0):
            raise ConstructionError("zero-length spring in model")
        if not np.allclose(lengths, self.spring_rest, rtol=1e-12, atol=1e-9):
            raise ConstructionError("spring rest lengths inconsistent with rest positions")
        if np.any(self.spring_k <= 0):
            raise ConstructionError("non-positive spring stiffness")
        adj = coo_matrix(
            (np.ones(len(self.spring_i)), (self.spring_i, self.spring_j)), shape=(n, n)
        )
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise ConstructionError(f"spring graph is disconnected ({n_comp} components)")
        # Pose fitting needs a non-degenerate feedback node set.
        p = self.rest_positions[self.platform_node_ids]
        centered = p - p.mean(axis=0)
        if len(p) < 3 or np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise ConstructionError("platform_node_ids are collinear; pose fit would be degenerate")


@dataclass
class SimState:
    """Node positions (mm), velocities (mm/s) and the simulation clock (s)."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.positions.copy(), self.velocities.copy(), self.time)

    def validate(self, model: SoftBodyModel) -> None:
        n = model.node_count
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError("state arrays do not match model node count")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("non-finite state")


# ---------------------------------------------------------------------------
# lattice assembly helpers


class _EdgeAccumulator:
    def __init__(self, positions: list[np.ndarray]):
        self.positions = positions
        self.stiffness: dict[tuple[int, int], float] = {}

    def _edge_len(self, a: int, b: int, context: str) -> float:
        length = float(np.linalg.norm(self.positions[a] - self.positions[b]))
        if length <= 1e-12:
            raise ConstructionError(f"zero-length edge produced by {context}")
        return length

    def add_cell(
        self,
        volume: float,
        structural: list[tuple[int, int]],
        diagonals: list[tuple[int, int]],
        e_internal: float,
        poisson: float,
        context: str,
    ) -> None:
        structural = _dedupe(structural)
        diagonals = _dedupe(diagonals)
        budget = e_internal * volume
        if diagonals:
            s_share, d_share = (1.0 - poisson) * budget, poisson * budget
        else:
            s_share, d_share = budget, 0.0
        for edges, share in ((structural, s_share), (diagonals, d_share)):
            if not edges or share == 0.0:
                continue
            per_edge = share / len(edges)
            for a, b in edges:
                length = self._edge_len(a, b, context)
                key = (a, b) if a < b else (b, a)
                self.stiffness[key] = self.stiffness.get(key, 0.0) + per_edge / length**2

    def finalize(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        keys = sorted(self.stiffness)
        i = np.array([k[0] for k in keys], dtype=np.int64)
        j = np.array([k[1] for k in keys], dtype=np.int64)
        k = np.array([self.stiffness[key] for key in keys], dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        rest = np.linalg.norm(pos[j] - pos[i], axis=1)
        return i, j, k, rest


def _dedupe(edges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    seen = set()
    out = []
    for a, b in edges:
        key = (a, b) if a < b else (b, a)
        if key not in seen and a != b:
            seen.add(key)
            out.append((a, b))
    return out


def _ring_edges(ring: list[int]) -> list[tuple[int, int]]:
    n = len(ring)
    if n < 3:
        return [(ring[0], ring[1])] if n == 2 else []
    return [(ring[c], ring[(c + 1) % n]) for c in range(n)]


def _prism_cell_edges(
    bottom: list[int], top: list[int], bottom_axis: int | None, top_axis: int | None
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Edge classes for a prism between two rings (optionally with axis nodes)."""
    n = len(bottom)
    structural = _ring_edges(bottom) + _ring_edges(top)
    structural += [(bottom[c], top[c]) for c in range(n)]
    diagonals = []
    for c in range(n):
        c1 = (c + 1) % n
        diagonals.append((bottom[c], top[c1]))
        diagonals.append((bottom[c1], top[c]))
    if bottom_axis is not None and top_axis is not None:
        structural += [(bottom_axis, bottom[c]) for c in range(n)]
        structural += [(top_axis, top[c]) for c in range(n)]
        structural.append((bottom_axis, top_axis))
        diagonals += [(bottom_axis, top[c]) for c in range(n)]
        diagonals += [(bottom[c], top_axis) for c in range(n)]
    return structural, diagonals


def _leg_frame(mount_angle_deg: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leg-local frame: w along the leg axis handled by caller; u, v span the cross-section."""
    a = math.radians(mount_angle_deg)
    u = np.array([math.cos(a), math.sin(a), 0.0])
    # v completes a right-handed frame with the downward leg axis
    v = np.array([-math.sin(a), math.cos(a), 0.0])
    return u, v, np.array([0.0, 0.0, 1.0])


def _uniform_masses(n: int, total_mass: float) -> np.ndarray:
    if not total_mass > 0:
        raise ConstructionError(f"total mass must be > 0, got {total_mass}")
    return np.full(n, total_mass / n, dtype=float)


# ---------------------------------------------------------------------------
# builders


def build_robot_model(
    geometry: RobotGeometry, material: MaterialParams, total_mass: float
) -> SoftBodyModel:
    """Full tripedal robot: hexagonal two-layer platform, three vertical legs
    at 120 degree spacing, nine cable waypoint chains. Free floating (no fixed
    nodes); leg tips rest on the plane z = 0.
    """
    geometry.validate()
    material.validate()
    axial, radial, circ = geometry.lattice_resolution
    e_int = material.young_modulus_internal
    nu = material.poisson_ratio
    area = geometry.leg_cross_section_area

    positions: list[np.ndarray] = []

    def add_node(p) -> int:
        positions.append(np.asarray(p, dtype=float))
        return len(positions) - 1

    z_mount = geometry.leg_length          # platform bottom layer
    z_top = z_mount + geometry.platform_thickness

    # Per leg: `axial` rings from tip (z=0) to z_mount, plus one mount ring at z_top.
    leg_rings: list[list[list[int]]] = []   # leg -> ring index (0=tip) -> node ids
    leg_axes: list[list[int | None]] = []
    for leg in range(geometry.leg_count):
        theta = geometry.leg_mount_angle_spacing * leg
        center = np.array(
            [
                geometry.platform_radius * math.cos(math.radians(theta)),
                geometry.platform_radius * math.sin(math.radians(theta)),
                0.0,
            ]
        )
        rings = []
        axes: list[int | None] = []
        heights = [geometry.leg_length * a / (axial - 1) for a in range(axial)] + [z_top]
        for z in heights:
            ring = []
            for c in range(circ):
                phi = math.radians(360.0 * c / circ + theta)
                p = center + np.array(
                    [geometry.leg_radius * math.cos(phi), geometry.leg_radius * math.sin(phi), z]
                )
                ring.append(add_node(p))
            rings.append(ring)
            axes.append(add_node(center + np.array([0.0, 0.0, z])) if radial == 2 else None)
        leg_rings.append(rings)
        leg_axes.append(axes)

    # Platform: two hexagonal layers with center nodes.
    hex_angles = [60.0 * s for s in range(6)]
    center_bot = add_node([0.0, 0.0, z_mount])
    center_top = add_node([0.0, 0.0, z_top])
    hex_bot, hex_top = [], []
    for ang in hex_angles:
        x = geometry.platform_radius * math.cos(math.radians(ang))
        y = geometry.platform_radius * math.sin(math.radians(ang))
        hex_bot.append(add_node([x, y, z_mount]))
        hex_top.append(add_node([x, y, z_top]))

    acc = _EdgeAccumulator(positions)

    # Leg prism cells (including the last segment crossing the platform slab).
    for leg in range(geometry.leg_count):
        rings, axes = leg_rings[leg], leg_axes[leg]
        heights = [geometry.leg_length * a / (axial - 1) for a in range(axial)] + [z_top]
        for a in range(len(rings) - 1):
            seg = heights[a + 1] - heights[a]
            structural, diagonals = _prism_cell_edges(rings[a], rings[a + 1], axes[a], axes[a + 1])
            acc.add_cell(area * seg, structural, diagonals, e_int, nu, "leg lattice (check lattice_resolution)")

    # Platform sector cells.
    hex_area = 1.5 * math.sqrt(3.0) * geometry.platform_radius**2
    sector_volume = hex_area / 6.0 * geometry.platform_thickness
    for s in range(6):
        s1 = (s + 1) % 6
        structural = [
            (center_bot, hex_bot[s]), (center_bot, hex_bot[s1]),
            (center_top, hex_top[s]), (center_top, hex_top[s1]),
            (hex_bot[s], hex_bot[s1]), (hex_top[s], hex_top[s1]),
            (center_bot, center_top), (hex_bot[s], hex_top[s]), (hex_bot[s1], hex_top[s1]),
        ]
        diagonals = [
            (hex_bot[s], hex_top[s1]), (hex_bot[s1], hex_top[s]),
            (center_bot, hex_top[s]), (hex_bot[s], center_top),
        ]
        acc.add_cell(sector_volume, structural, diagonals, e_int, nu, "platform lattice (check platform_thickness)")

    # Mount cells: tie the two platform-level leg rings into both layers.
    mount_volume = area * geometry.platform_thickness
    for leg in range(geometry.leg_count):
        rings = leg_rings[leg]
        r_ring = rings[axial - 1]   # at platform bottom layer
        m_ring = rings[axial]       # at platform top layer
        h = 2 * leg                 # hexagon node aligned with the leg
        h_prev, h_next = (h - 1) % 6, (h + 1) % 6
        structural = (
            [(rc, hex_bot[h]) for rc in r_ring]
            + [(mc, hex_top[h]) for mc in m_ring]
            + [(rc, center_bot) for rc in r_ring]
        )
        diagonals = (
            [(rc, hex_top[h]) for rc in r_ring]
            + [(mc, hex_bot[h]) for mc in m_ring]
            + [(mc, center_top) for mc in m_ring]
            + [(rc, hex_bot[h_prev]) for rc in r_ring]
            + [(rc, hex_bot[h_next]) for rc in r_ring]
        )
        acc.add_cell(mount_volume, structural, diagonals, e_int, nu, "leg-platform mount")

    spring_i, spring_j, spring_k, spring_rest = acc.finalize()

    platform_ids = np.array([center_bot, center_top] + hex_bot + hex_top, dtype=np.int64)
    tip_ids = [np.array(leg_rings[leg][0], dtype=np.int64) for leg in range(geometry.leg_count)]

    cable_ids = []
    step = circ // 3
    for leg in range(geometry.leg_count):
        rings = leg_rings[leg]
        for cable in range(3):
            c = cable * step
            chain = [rings[a][c] for a in range(len(rings) - 1, -1, -1)]  # platform -> tip
            cable_ids.append(np.array(chain, dtype=np.int64))

    model = SoftBodyModel(
        rest_positions=np.asarray(positions, dtype=float),
        node_masses=_uniform_masses(len(positions), total_mass),
        spring_i=spring_i,
        spring_j=spring_j,
        spring_k=spring_k,
        spring_rest=spring_rest,
        platform_node_ids=platform_ids,
        leg_tip_node_ids=tip_ids,
        cable_waypoint_ids=cable_ids,
        fixed_node_ids=np.array([], dtype=np.int64),
        total_mass=float(total_mass),
        rayleigh_mass_damping=material.rayleigh_mass_damping,
        rayleigh_stiffness_damping=material.rayleigh_stiffness_damping,
        meta={"kind": "robot", "geometry": _geometry_dict(geometry)},
    )
    model.validate()
    return model


def build_leg_model(
    geometry: RobotGeometry, material: MaterialParams, mass: float
) -> SoftBodyModel:
    """Single horizontal cantilever leg along +x with the base ring fixed at the
    origin, three cables routed base-to-tip. Used for unit tests and the
    bending demo.
    """
    geometry.validate()
    material.validate()
    axial, radial, circ = geometry.lattice_resolution
    e_int = material.young_modulus_internal
    nu = material.poisson_ratio
    area = geometry.leg_cross_section_area

    positions: list[np.ndarray] = []

    def add_node(p) -> int:
        positions.append(np.asarray(p, dtype=float))
        return len(positions) - 1

    rings: list[list[int]] = []
    axes: list[int | None] = []
    for a in range(axial):
        x = geometry.leg_length * a / (axial - 1)
        ring = []
        for c in range(circ):
            phi = math.radians(360.0 * c / circ)
            # cross-section spans (y, z); cable 0 anchors at +y
            ring.append(add_node([x, geometry.leg_radius * math.cos(phi), geometry.leg_radius * math.sin(phi)]))
        rings.append(ring)
        axes.append(add_node([x, 0.0, 0.0]) if radial == 2 else None)

    acc = _EdgeAccumulator(positions)
    seg = geometry.leg_length / (axial - 1)
    for a in range(axial - 1):
        structural, diagonals = _prism_cell_edges(rings[a], rings[a + 1], axes[a], axes[a + 1])
        acc.add_cell(area * seg, structural, diagonals, e_int, nu, "leg lattice (check lattice_resolution)")
    spring_i, spring_j, spring_k, spring_rest = acc.finalize()

    fixed = list(rings[0]) + ([axes[0]] if axes[0] is not None else [])
    tip_ring = np.array(rings[-1], dtype=np.int64)
    step = circ // 3
    cable_ids = [
        np.array([rings[a][cable * step] for a in range(axial)], dtype=np.int64)
        for cable in range(3)
    ]

    model = SoftBodyModel(
        rest_positions=np.asarray(positions, dtype=float),
        node_masses=_uniform_masses(len(positions), mass),
        spring_i=spring_i,
        spring_j=spring_j,
        spring_k=spring_k,
        spring_rest=spring_rest,
        platform_node_ids=tip_ring,   # pose feedback set = end-effector ring
        leg_tip_node_ids=[tip_ring],
        cable_waypoint_ids=cable_ids,
        fixed_node_ids=np.array(fixed, dtype=np.int64),
        total_mass=float(mass),
        rayleigh_mass_damping=material.rayleigh_mass_damping,
        rayleigh_stiffness_damping=material.rayleigh_stiffness_damping,
        meta={"kind": "leg", "geometry": _geometry_dict(geometry)},
    )
    model.validate()
    return model


def build_bar_model(
    young_modulus_pa: float,
    cross_section_mm2: float,
    length_mm: float,
    mass: float,
    mass_damping: float = 0.0,
    stiffness_damping: float = 0.0,
) -> SoftBodyModel:
    """Degenerate 2-node, 1-spring bar; stiffness E*A/L by the volumetric rule.

    Calibration helper: the single cell has volume A*L, one structural edge
    and no braces, so the general rule collapses to the analytic bar formula.
    """
    if length_mm <= 0 or cross_section_mm2 <= 0 or young_modulus_pa <= 0:
        raise ConstructionError("bar parameters must be positive")
    positions = [np.zeros(3), np.array([0.0, 0.0, -length_mm])]
    acc = _EdgeAccumulator(positions)
    acc.add_cell(
        cross_section_mm2 * length_mm,
        [(0, 1)],
        [],
        young_modulus_pa * PA_TO_MN_PER_MM2,
        0.0,
        "bar",
    )
    spring_i, spring_j, spring_k, spring_rest = acc.finalize()
    model = SoftBodyModel(
        rest_positions=np.asarray(positions, dtype=float),
        node_masses=_uniform_masses(2, mass),
        spring_i=spring_i,
        spring_j=spring_j,
        spring_k=spring_k,
        spring_rest=spring_rest,
        platform_node_ids=np.array([0, 1], dtype=np.int64),
        leg_tip_node_ids=[np.array([1], dtype=np.int64)],
        cable_waypoint_ids=[np.array([0, 1], dtype=np.int64)],
        fixed_node_ids=np.array([0], dtype=np.int64),
        total_mass=float(mass),
        rayleigh_mass_damping=mass_damping,
        rayleigh_stiffness_damping=stiffness_damping,
        meta={"kind": "bar"},
    )
    # The bar intentionally skips full validation: a 2-node feedback set is
    # collinear and unusable for pose fitting, which the bar never does.
    return model


def _geometry_dict(geometry: RobotGeometry) -> dict:
    return {
        "leg_length": geometry.leg_length,
        "leg_radius": geometry.leg_radius,
        "leg_count": geometry.leg_count,
        "leg_mount_angle_spacing": geometry.leg_mount_angle_spacing,
        "platform_radius": geometry.platform_radius,
        "platform_thickness": geometry.platform_thickness,
        "lattice_resolution": list(geometry.lattice_resolution),
    }


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model: SoftBodyModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "rest_positions": model.rest_positions.tolist(),
        "node_masses": model.node_masses.tolist(),
        "springs": {
            "i": model.spring_i.tolist(),
            "j": model.spring_j.tolist(),
            "stiffness": model.spring_k.tolist(),
            "rest_length": model.spring_rest.tolist(),
        },
        "platform_node_ids": model.platform_node_ids.tolist(),
        "leg_tip_node_ids": [ids.tolist() for ids in model.leg_tip_node_ids],
        "cable_waypoint_ids": [ids.tolist() for ids in model.cable_waypoint_ids],
        "fixed_node_ids": model.fixed_node_ids.tolist(),
        "total_mass": model.total_mass,
        "rayleigh_mass_damping": model.rayleigh_mass_damping,
        "rayleigh_stiffness_damping": model.rayleigh_stiffness_damping,
        "meta": model.meta,
    }


def model_from_dict(doc: dict) -> SoftBodyModel:
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema {version!r}, expected {MODEL_SCHEMA_VERSION!r}")
    springs = doc["springs"]
    return SoftBodyModel(
        rest_positions=np.asarray(doc["rest_positions"], dtype=float),
        node_masses=np.asarray(doc["node_masses"], dtype=float),
        spring_i=np.asarray(springs["i"], dtype=np.int64),
        spring_j=np.asarray(springs["j"], dtype=np.int64),
        spring_k=np.asarray(springs["stiffness"], dtype=float),
        spring_rest=np.asarray(springs["rest_length"], dtype=float),
        platform_node_ids=np.asarray(doc["platform_node_ids"], dtype=np.int64),
        leg_tip_node_ids=[np.asarray(x, dtype=np.int64) for x in doc["leg_tip_node_ids"]],
        cable_waypoint_ids=[np.asarray(x, dtype=np.int64) for x in doc["cable_waypoint_ids"]],
        fixed_node_ids=np.asarray(doc["fixed_node_ids"], dtype=np.int64),
        total_mass=float(doc["total_mass"]),
        rayleigh_mass_damping=float(doc.get("rayleigh_mass_damping", 0.0)),
        rayleigh_stiffness_damping=float(doc.get("rayleigh_stiffness_damping", 0.0)),
        meta=doc.get("meta", {}),
    )


def save_model(model: SoftBodyModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)


def load_model(path) -> SoftBodyModel:
    with open(path) as f:
        return model_from_dict(json.load(f))

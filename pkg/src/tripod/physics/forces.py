"""Force evaluation and stiffness assembly for the mass-spring model.

Forces are in mN (kg*mm/s^2). Linearized spring stiffness blocks are
projected to be positive semi-definite (compression keeps only the axial
term) so the implicit system stays solvable by conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .model import SceneParams, SimState, SoftBodyModel

__all__ = [
    "ExternalForces",
    "PairStiffness",
    "RankOneStiffness",
    "spring_forces",
    "spring_blocks",
    "dense_stiffness",
    "stiffness_matrix",
    "assemble_forces",
]


@dataclass
class RankOneStiffness:
    """k * g g^T over the listed nodes; PSD linearization of a scalar-length
    penalty (a taut cable's servo stiffness)."""

    node_ids: np.ndarray       # (w,)
    gradient: np.ndarray       # (w, 3)
    coefficient: float


@dataclass
class PairStiffness:
    """Spring-like PSD blocks: +B at (i,i),(j,j) and -B at (i,j),(j,i)."""

    node_i: np.ndarray         # (p,)
    node_j: np.ndarray         # (p,)
    blocks: np.ndarray         # (p, 3, 3)


@dataclass
class ExternalForces:
    """External load on the body, with its linearization for the solver.

    forces: (n, 3) mN.
    stiffness_blocks: (n, 3, 3) per-node PSD part of -d f_ext / d x.
    damping_blocks: (n, 3, 3) PSD part of -d f_ext / d v.
    pair_stiffness / rank_one: structured PSD parts of -d f_ext / d x that
        couple nodes (cable geometric and servo terms). Folding these into
        the implicit system is what keeps stiff penalty actuation stable.
    """

    forces: np.ndarray
    stiffness_blocks: np.ndarray | None = None
    damping_blocks: np.ndarray | None = None
    pair_stiffness: list[PairStiffness] = field(default_factory=list)
    rank_one: list[RankOneStiffness] = field(default_factory=list)

    @staticmethod
    def zero(n: int) -> "ExternalForces":
        return ExternalForces(forces=np.zeros((n, 3)))

    def add(self, other: "ExternalForces") -> "ExternalForces":
        return ExternalForces(
            forces=self.forces + other.forces,
            stiffness_blocks=_merge_blocks(self.stiffness_blocks, other.stiffness_blocks),
            damping_blocks=_merge_blocks(self.damping_blocks, other.damping_blocks),
            pair_stiffness=self.pair_stiffness + other.pair_stiffness,
            rank_one=self.rank_one + other.rank_one,
        )

    def stiffness_apply(self, v: np.ndarray) -> np.ndarray:
        """(-d f_ext / d x) @ v for a (n, 3) vector field, returned (n, 3)."""
        out = np.zeros_like(v)
        if self.stiffness_blocks is not None:
            out += np.einsum("nij,nj->ni", self.stiffness_blocks, v)
        for pair in self.pair_stiffness:
            dv = v[pair.node_i] - v[pair.node_j]
            bdv = np.einsum("pij,pj->pi", pair.blocks, dv)
            np.add.at(out, np.concatenate([pair.node_i, pair.node_j]), np.concatenate([bdv, -bdv]))
        if self.rank_one:
            ids = np.concatenate([r1.node_ids for r1 in self.rank_one])
            scaled = np.concatenate(
                [
                    r1.coefficient * float(np.sum(r1.gradient * v[r1.node_ids])) * r1.gradient
                    for r1 in self.rank_one
                ]
            )
            np.add.at(out, ids, scaled)
        return out


def _merge_blocks(a: np.ndarray | None, b: np.ndarray | None) -> np.ndarray | None:
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _spring_geometry(model: SoftBodyModel, positions: np.ndarray):
    d = positions[model.spring_j] - positions[model.spring_i]
    length = np.sqrt(np.einsum("md,md->m", d, d))
    if np.any(length <= 1e-12):
        raise FloatingPointError("spring collapsed to zero length")
    u = d / length[:, None]
    return d, length, u


def _scatter_pairwise(model: SoftBodyModel, fvec: np.ndarray) -> np.ndarray:
    """Accumulate +fvec at spring_i and -fvec at spring_j, per coordinate."""
    n = model.node_count
    out = np.empty((n, 3))
    for k in range(3):
        out[:, k] = np.bincount(model.spring_i, weights=fvec[:, k], minlength=n) - np.bincount(
            model.spring_j, weights=fvec[:, k], minlength=n
        )
    return out


def spring_forces(model: SoftBodyModel, positions: np.ndarray) -> np.ndarray:
    """Hookean forces of all springs, accumulated per node."""
    _, length, u = _spring_geometry(model, positions)
    t = model.spring_k * (length - model.spring_rest)   # tension, mN
    return _scatter_pairwise(model, t[:, None] * u)


def spring_blocks(model: SoftBodyModel, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-spring PSD-projected 3x3 stiffness blocks and nodal spring forces.

    Single source of the linearized elasticity used by both the CSR surface
    (stiffness_matrix) and the integrator's dense fast path.
    """
    _, length, u = _spring_geometry(model, positions)
    outer = u[:, :, None] * u[:, None, :]
    eye = np.eye(3)[None, :, :]
    tangent = np.clip(1.0 - model.spring_rest / length, 0.0, None)
    blocks = model.spring_k[:, None, None] * (outer + tangent[:, None, None] * (eye - outer))
    t = model.spring_k * (length - model.spring_rest)
    forces = _scatter_pairwise(model, t[:, None] * u)
    return blocks, forces


def dense_stiffness(model: SoftBodyModel, blocks: np.ndarray) -> np.ndarray:
    """Assemble K = -d f_spring / d x densely from per-spring blocks."""
    n3 = 3 * model.node_count
    lin = _dense_pattern(model)
    flat = blocks.reshape(-1, 9)
    data = np.concatenate([flat, flat, -flat, -flat], axis=0).ravel()
    return np.bincount(lin, weights=data, minlength=n3 * n3).reshape(n3, n3)


def _dense_pattern(model: SoftBodyModel) -> np.ndarray:
    lin = model._cache.get("dense_pattern")
    if lin is None:
        rows, cols = _coo_pattern(model)
        lin = rows * (3 * model.node_count) + cols
        model._cache["dense_pattern"] = lin
    return lin


def _coo_pattern(model: SoftBodyModel) -> tuple[np.ndarray, np.ndarray]:
    """Cached COO (row, col) pattern for per-spring 3x3 block scatter."""
    cached = model._cache.get("coo_pattern")
    if cached is not None:
        return cached
    i3 = 3 * model.spring_i
    j3 = 3 * model.spring_j
    rows, cols = [], []
    off = np.arange(3)
    for base_r, base_c in ((i3, i3), (j3, j3), (i3, j3), (j3, i3)):
        r = (base_r[:, None, None] + off[None, :, None]).repeat(3, axis=2)
        c = (base_c[:, None, None] + off[None, None, :]).repeat(3, axis=1)
        rows.append(r.ravel())
        cols.append(c.ravel())
    pattern = (np.concatenate(rows), np.concatenate(cols))
    model._cache["coo_pattern"] = pattern
    return pattern


def stiffness_matrix(model: SoftBodyModel, positions: np.ndarray) -> csr_matrix:
    """K = -d f_spring / d x as a (3n, 3n) CSR matrix, PSD-projected."""
    blocks, _ = spring_blocks(model, positions)
    flat = blocks.reshape(len(model.spring_i), 9)
    data = np.concatenate([flat, flat, -flat, -flat], axis=0).ravel()
    rows, cols = _coo_pattern(model)
    n3 = 3 * model.node_count
    return csr_matrix((data, (rows, cols)), shape=(n3, n3))


def assemble_forces(
    model: SoftBodyModel,
    state: SimState,
    scene: SceneParams,
    external: np.ndarray | None = None,
    stiffness: csr_matrix | None = None,
) -> np.ndarray:
    """Total nodal force: gravity + elastic + Rayleigh damping + external.

    `stiffness` may be passed to reuse an already-assembled matrix for the
    damping term; otherwise it is built from the current positions.
    """
    state.validate(model)
    n = model.node_count
    if external is None:
        external = np.zeros((n, 3))
    external = np.asarray(external, dtype=float)
    if external.shape != (n, 3):
        raise ValueError(f"external force list must be ({n}, 3), got {external.shape}")

    f = model.node_masses[:, None] * scene.gravity_vec[None, :]
    f = f + spring_forces(model, state.positions)
    alpha = model.rayleigh_mass_damping
    beta = model.rayleigh_stiffness_damping
    if alpha:
        f -= alpha * model.node_masses[:, None] * state.velocities
    if beta:
        if stiffness is None:
            stiffness = stiffness_matrix(model, state.positions)
        f -= beta * (stiffness @ state.velocities.ravel()).reshape(n, 3)
    return f + external

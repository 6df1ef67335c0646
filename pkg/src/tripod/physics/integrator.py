"""Implicit Euler stepping with a conjugate-gradient linear solve.

One step solves

    (M - h df/dv - h^2 df/dx) dv = h f + h^2 (df/dx) v

for the velocity update, where df/dx collects the (PSD-projected) spring
stiffness plus any external linearization blocks, and df/dv the Rayleigh
and external damping. Fixed nodes are held bit-identical by projecting
their degrees of freedom out of the solve. The system is small (a few
hundred DOF), so it is assembled densely for fast repeated matvecs.
"""

from __future__ import annotations

from math import sqrt as math_sqrt
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .forces import ExternalForces, dense_stiffness, spring_blocks
from .model import SceneParams, SimState, SoftBodyModel

__all__ = ["CGError", "StepError", "solve_cg", "step_implicit_euler"]

ForceProvider = Callable[[SimState], ExternalForces]


class CGError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"CG failed to converge in {iterations} iterations, residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


class StepError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def solve_cg(
    matrix_apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float,
    max_iter: int,
    precond_apply: Callable[[np.ndarray], np.ndarray] | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Conjugate gradients for an SPD operator; ||A x - b|| <= tol * ||b||."""
    b = np.asarray(rhs, dtype=float)
    norm_b2 = float(b @ b)
    if norm_b2 == 0.0:
        return np.zeros_like(b)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - matrix_apply(x)
    target2 = tol * tol * norm_b2
    res2 = float(r @ r)
    if res2 <= target2:
        return x
    z = precond_apply(r) if precond_apply is not None else r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        ap = matrix_apply(p)
        p_ap = float(p @ ap)
        if p_ap <= 0.0:
            raise CGError(math_sqrt(res2), max_iter)  # operator not SPD on this subspace
        alpha = rz / p_ap
        x += alpha * p
        r -= alpha * ap
        res2 = float(r @ r)
        if res2 <= target2:
            return x
        z = precond_apply(r) if precond_apply is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CGError(math_sqrt(res2), max_iter)


def _free_mask(model: SoftBodyModel) -> np.ndarray:
    mask = model._cache.get("free_mask")
    if mask is None:
        mask = np.ones(3 * model.node_count)
        if len(model.fixed_node_ids):
            fixed_dofs = (3 * model.fixed_node_ids[:, None] + np.arange(3)[None, :]).ravel()
            mask[fixed_dofs] = 0.0
        model._cache["free_mask"] = mask
    return mask


def _node_block_pattern(model: SoftBodyModel) -> np.ndarray:
    """Flat indices of every node's 3x3 diagonal block in the dense matrix."""
    lin = model._cache.get("node_block_pattern")
    if lin is None:
        n = model.node_count
        base = 3 * np.arange(n)
        off = np.arange(3)
        rows = (base[:, None, None] + off[None, :, None]).repeat(3, axis=2)
        cols = (base[:, None, None] + off[None, None, :]).repeat(3, axis=1)
        lin = (rows * (3 * n) + cols).ravel()
        model._cache["node_block_pattern"] = lin
    return lin


def _masses3(model: SoftBodyModel) -> np.ndarray:
    m3 = model._cache.get("masses3")
    if m3 is None:
        m3 = np.repeat(model.node_masses, 3)
        model._cache["masses3"] = m3
    return m3


def _factor_preconditioner(a: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Cholesky factorization of A as the CG preconditioner; at this system
    size an exact factor is cheaper than the iterations it saves. Falls back
    to Jacobi if the factorization fails."""
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
        return lambda r: cho_solve(factor, r, check_finite=False)
    except np.linalg.LinAlgError:
        inv_diag = 1.0 / np.maximum(np.abs(np.diag(a)), 1e-300)
        return lambda r: inv_diag * r


_OFF = np.arange(3)


def _block_lin(base_r: np.ndarray, base_c: np.ndarray, n3: int) -> np.ndarray:
    return (
        (base_r[:, None, None] + _OFF[None, :, None]) * n3 + base_c[:, None, None] + _OFF[None, None, :]
    )


def _scatter_structured(A: np.ndarray, ext: ExternalForces, h: float, n: int) -> None:
    """Add h^2 * (pairwise + rank-one) external stiffness into dense A."""
    n3 = 3 * n
    h2 = h * h
    flat_a = A.ravel()
    for pair in ext.pair_stiffness:
        flat = (h2 * pair.blocks).reshape(-1)
        i3 = 3 * pair.node_i
        j3 = 3 * pair.node_j
        lin = np.concatenate(
            [
                _block_lin(i3, i3, n3).ravel(),
                _block_lin(j3, j3, n3).ravel(),
                _block_lin(i3, j3, n3).ravel(),
                _block_lin(j3, i3, n3).ravel(),
            ]
        )
        np.add.at(flat_a, lin, np.concatenate([flat, flat, -flat, -flat]))
    by_width: dict[int, list] = {}
    for r1 in ext.rank_one:
        by_width.setdefault(len(r1.node_ids), []).append(r1)
    for group in by_width.values():
        g = np.stack([r1.gradient.ravel() for r1 in group])          # (c, 3w)
        coef = np.array([h2 * r1.coefficient for r1 in group])
        dofs = np.stack([(3 * r1.node_ids[:, None] + _OFF[None, :]).ravel() for r1 in group])
        outers = coef[:, None, None] * (g[:, :, None] * g[:, None, :])
        lin = dofs[:, :, None] * n3 + dofs[:, None, :]
        np.add.at(flat_a, lin.ravel(), outers.ravel())


def _attempt_step(
    model: SoftBodyModel,
    state: SimState,
    scene: SceneParams,
    external_force_provider: ForceProvider | None,
    h: float,
) -> SimState:
    n = model.node_count
    ext = external_force_provider(state) if external_force_provider is not None else ExternalForces.zero(n)

    blocks, f_spring = spring_blocks(model, state.positions)
    K = dense_stiffness(model, blocks)

    v = state.velocities.ravel()
    alpha = model.rayleigh_mass_damping
    beta = model.rayleigh_stiffness_damping
    masses3 = _masses3(model)
    kv = K @ v

    # total force: gravity + elastic + Rayleigh damping + external
    f = (model.node_masses[:, None] * scene.gravity_vec[None, :] + f_spring + ext.forces).ravel()
    f -= alpha * masses3 * v + beta * kv
    ext_kv = ext.stiffness_apply(state.velocities).ravel()

    rhs = h * f - h * h * (kv + ext_kv)

    A = (h * beta + h * h) * K
    node_blocks = np.zeros((n, 3, 3))
    if ext.stiffness_blocks is not None:
        node_blocks += h * h * ext.stiffness_blocks
    if ext.damping_blocks is not None:
        node_blocks += h * ext.damping_blocks
    idx = np.arange(3)
    node_blocks[:, idx, idx] += ((1.0 + h * alpha) * masses3).reshape(n, 3)
    A.ravel()[_node_block_pattern(model)] += node_blocks.ravel()
    _scatter_structured(A, ext, h, n)

    mask = _free_mask(model)
    fully_free = bool(model._cache.setdefault("fully_free", len(model.fixed_node_ids) == 0))

    if fully_free:
        def apply_a(x: np.ndarray) -> np.ndarray:
            return A @ x
        b = rhs
        a_for_factor = A
    else:
        def apply_a(x: np.ndarray) -> np.ndarray:
            return mask * (A @ (mask * x)) + (1.0 - mask) * x
        b = mask * rhs
        # identity on constrained DOFs keeps the projected operator SPD
        a_for_factor = (mask[:, None] * A) * mask[None, :]
        fixed = np.nonzero(mask == 0.0)[0]
        a_for_factor[fixed, fixed] = 1.0

    precond = _factor_preconditioner(a_for_factor)
    dv = solve_cg(
        apply_a,
        b,
        tol=scene.cg_tolerance,
        max_iter=scene.cg_max_iterations,
        precond_apply=precond,
        x0=None,
    )

    new_v = state.velocities + dv.reshape(n, 3)
    new_x = state.positions + h * new_v
    if len(model.fixed_node_ids):
        new_v[model.fixed_node_ids] = 0.0
        new_x[model.fixed_node_ids] = state.positions[model.fixed_node_ids]
    new_state = SimState(positions=new_x, velocities=new_v, time=state.time + h)
    if not (np.all(np.isfinite(new_x)) and np.all(np.isfinite(new_v))):
        raise StepError("non-finite state after step")
    return new_state


def step_implicit_euler(
    model: SoftBodyModel,
    state: SimState,
    params: SceneParams,
    external_force_provider: ForceProvider | None = None,
) -> SimState:
    """Advance one time step. On CG non-convergence the step is retried as
    two half steps; if those fail too, StepError carries the residual.
    """
    state.validate(model)
    h = params.time_step
    try:
        return _attempt_step(model, state, params, external_force_provider, h)
    except CGError as first:
        try:
            half = _attempt_step(model, state, params, external_force_provider, h / 2)
            return _attempt_step(model, half, params, external_force_provider, h / 2)
        except CGError as second:
            raise StepError(
                f"CG failed at h={h} (residual {first.residual:.3e}) and at h/2 "
                f"(residual {second.residual:.3e})",
                residual=second.residual,
            ) from second

"""Deformable-body dynamics: model builders, forces, implicit integration, pose."""

from .forces import ExternalForces, assemble_forces, spring_forces, stiffness_matrix
from .integrator import CGError, StepError, solve_cg, step_implicit_euler
from .model import (
    ConstructionError,
    MaterialParams,
    RobotGeometry,
    SceneParams,
    SimState,
    SoftBodyModel,
    build_bar_model,
    build_leg_model,
    build_robot_model,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .pose import Pose, base_pose, fit_rotation, rotation_to_euler_zyx

__all__ = [
    "ConstructionError",
    "MaterialParams",
    "RobotGeometry",
    "SceneParams",
    "SimState",
    "SoftBodyModel",
    "build_bar_model",
    "build_leg_model",
    "build_robot_model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
    "ExternalForces",
    "assemble_forces",
    "spring_forces",
    "stiffness_matrix",
    "CGError",
    "StepError",
    "solve_cg",
    "step_implicit_euler",
    "Pose",
    "base_pose",
    "fit_rotation",
    "rotation_to_euler_zyx",
]

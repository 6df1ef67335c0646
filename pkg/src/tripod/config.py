"""Configuration: one JSON document with sections for the robot, scene,
actuation, contact, episode, and learner, merged over packaged defaults.

`--set section.key=value` overrides individual entries; values parse as
JSON with a plain-string fallback. Every run writes a resolved snapshot
sufficient to reproduce it exactly.
"""

from __future__ import annotations

import copy
import json
from importlib import resources

from .cables import CableParams
from .contact import ContactParams
from .environment import EpisodeConfig
from .physics.model import MaterialParams, RobotGeometry, SceneParams
from .ppo.learner import PPOConfig

CONFIG_SCHEMA_VERSION = "tripod-config/1"

__all__ = [
    "ConfigError",
    "load_defaults",
    "load_config",
    "apply_overrides",
    "build_components",
    "write_resolved",
]


class ConfigError(ValueError):
    pass


def load_defaults() -> dict:
    with resources.files("tripod.data").joinpath("defaults.json").open() as f:
        return json.load(f)


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config field: {where}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None = None) -> dict:
    """Packaged defaults overlaid with the user's JSON config file."""
    cfg = load_defaults()
    if path is None:
        return cfg
    try:
        with open(path) as f:
            user = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    version = user.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {version!r}")
    return _deep_merge(cfg, user)


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` strings; values parse as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        keys = dotted.split(".")
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"unknown config section in override: {dotted}")
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config field in override: {dotted}")
        node[keys[-1]] = value
    return cfg


def build_components(cfg: dict) -> dict:
    """Instantiate and validate the typed parameter objects from a config."""
    try:
        geometry = RobotGeometry(
            leg_length=cfg["geometry"]["leg_length"],
            leg_radius=cfg["geometry"]["leg_radius"],
            leg_count=cfg["geometry"]["leg_count"],
            leg_mount_angle_spacing=cfg["geometry"]["leg_mount_angle_spacing"],
            platform_radius=cfg["geometry"]["platform_radius"],
            platform_thickness=cfg["geometry"]["platform_thickness"],
            lattice_resolution=tuple(cfg["geometry"]["lattice_resolution"]),
        )
        material = MaterialParams(**cfg["material"])
        scene = SceneParams(
            gravity=tuple(cfg["scene"]["gravity"]),
            time_step=cfg["scene"]["time_step"],
            cg_tolerance=cfg["scene"]["cg_tolerance"],
            cg_max_iterations=cfg["scene"]["cg_max_iterations"],
        )
        cables = CableParams(**cfg["cables"])
        contact = ContactParams(**cfg["contact"])
        episode_doc = dict(cfg["episode"])
        episode_doc["goal_band"] = tuple(episode_doc["goal_band"])
        if episode_doc.get("height_limits") is not None:
            episode_doc["height_limits"] = tuple(episode_doc["height_limits"])
        episode = EpisodeConfig(**episode_doc)
        ppo_doc = dict(cfg["ppo"])
        ppo_doc["hidden"] = tuple(ppo_doc["hidden"])
        ppo = PPOConfig(**ppo_doc)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"bad config structure: {e}")
    geometry.validate()
    material.validate()
    scene.validate()
    cables.validate()
    contact.validate()
    episode.validate()
    ppo.validate()
    total_mass = cfg["robot"]["total_mass"]
    if total_mass is None:
        # derive from density (kg/m^3 -> kg/mm^3 is 1e-9) and the nominal solid volume
        import math

        leg_volume = geometry.leg_cross_section_area * geometry.leg_length * geometry.leg_count
        platform_volume = math.pi * geometry.platform_radius**2 * geometry.platform_thickness
        total_mass = cfg["material"]["density"] * 1e-9 * (leg_volume + platform_volume)
    if not total_mass > 0:
        raise ConfigError(f"robot.total_mass must be > 0, got {total_mass}")
    return {
        "geometry": geometry,
        "material": material,
        "scene": scene,
        "cables": cables,
        "contact": contact,
        "episode": episode,
        "ppo": ppo,
        "total_mass": float(total_mass),
        "evaluation": dict(cfg["evaluation"]),
    }


def write_resolved(cfg: dict, path: str, **extras) -> None:
    doc = copy.deepcopy(cfg)
    doc["schema_version"] = CONFIG_SCHEMA_VERSION
    doc["resolved"] = extras
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)

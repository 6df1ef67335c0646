"""Command-line entry point: train, eval, trajectory, demo-leg, plot.

Every subcommand reads one JSON config (packaged defaults overlaid with
--config and --set overrides), seeds all randomness from --seed through
named substreams, and writes a resolved-config snapshot next to its
artifacts so any run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .cables import cables_terms, route_cables
from .config import ConfigError, apply_overrides, build_components, load_config, write_resolved
from .environment import ACTION_DIM, OBS_DIM, TripodEnv, VectorEnv
from .evaluation import (
    GoalBenchmarkReport,
    EpisodeRecord,
    PointMassEnv,
    emit_map,
    emit_trajectory_map,
    make_arc_waypoints,
    run_goal_benchmark,
    run_trajectory,
    save_report,
)
from .physics.integrator import StepError, step_implicit_euler
from .physics.model import SceneParams, build_leg_model, build_robot_model
from .physics.pose import base_pose
from .ppo.learner import TrainingError, deterministic_action, load_checkpoint, train
from .rng import substream_seed

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _out_dir(args) -> str:
    out = args.out or os.environ.get("TRIPOD_OUT_DIR") or "tripod-out"
    os.makedirs(out, exist_ok=True)
    return out


def _load(args) -> tuple[dict, dict]:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    return cfg, build_components(cfg)


def make_robot_env(components: dict, seed: int, episode=None) -> TripodEnv:
    model = build_robot_model(components["geometry"], components["material"], components["total_mass"])
    return TripodEnv(
        model,
        components["geometry"],
        components["scene"],
        components["contact"],
        components["cables"],
        episode or components["episode"],
        seed=seed,
    )


def _make_env(kind: str, components: dict, seed: int, episode=None):
    if kind == "point-mass":
        return PointMassEnv(episode or components["episode"], seed=seed,
                            time_step=components["scene"].time_step)
    return make_robot_env(components, seed, episode)


def _policy_from_checkpoint(path: str):
    try:
        doc = load_checkpoint(path)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}")
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"corrupted checkpoint {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME)
    params = doc["params"]
    norm = doc["normalizer"]
    norm.frozen = True
    meta = params.meta
    have = (meta.get("obs_dim"), meta.get("action_dim"))
    want = (OBS_DIM, ACTION_DIM)
    if tuple(have) != want:
        print(f"checkpoint dimensions {have} do not match environment {want}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME)

    def policy(obs_vec: np.ndarray) -> np.ndarray:
        return deterministic_action(params, norm.normalize(obs_vec))[0]

    return policy, doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg, components = _load(args)
    out = _out_dir(args)
    ppo_cfg = components["ppo"]
    patch = {}
    if args.total_steps is not None:
        patch["total_steps"] = args.total_steps
    if args.n_envs is not None:
        patch["n_envs"] = args.n_envs
    if args.horizon is not None:
        patch["horizon"] = args.horizon
    if patch:
        from dataclasses import replace

        ppo_cfg = replace(ppo_cfg, **patch)
        ppo_cfg.validate()

    def make_vec(n, seed):
        return VectorEnv(
            [_make_env(args.env, components, substream_seed(seed, f"env/{i}")) for i in range(n)]
        )

    write_resolved(cfg, os.path.join(out, "resolved_config.json"),
                   command="train", seed=args.seed, env=args.env,
                   total_steps=ppo_cfg.total_steps, n_envs=ppo_cfg.n_envs, horizon=ppo_cfg.horizon)

    def log(row):
        print(
            f"update {row['update']:>4}  steps {row['env_steps']:>9}  "
            f"ep_return {row['mean_episode_return']:>10.2f}  success {row['success_rate']:.2f}"
            if row["episodes"]
            else f"update {row['update']:>4}  steps {row['env_steps']:>9}  (no episodes finished)"
        )

    try:
        train(make_vec, ppo_cfg, seed=args.seed, out_dir=out, log=log)
    except TrainingError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out}/checkpoint.json and {out}/learning_curve.csv")
    return EXIT_OK


def _episode_chunk(cfg_doc, checkpoint_path, kind, indices, seed):
    components = build_components(cfg_doc)
    policy, _ = _policy_from_checkpoint(checkpoint_path)
    env = _make_env(kind, components, seed=0)
    report = run_goal_benchmark(policy, env, n=len(indices), seed=seed, episode_indices=indices)
    return list(zip(indices, report.episodes))


def cmd_eval(args) -> int:
    cfg, components = _load(args)
    out = _out_dir(args)
    policy, _ = _policy_from_checkpoint(args.checkpoint)
    n = args.n_goals if args.n_goals is not None else components["evaluation"]["n_goals"]
    write_resolved(cfg, os.path.join(out, "resolved_config.json"),
                   command="eval", seed=args.seed, env=args.env, n_goals=n,
                   checkpoint=os.path.abspath(args.checkpoint), workers=args.workers)

    if args.workers > 1 and n > 1:
        chunks = np.array_split(np.arange(n), min(args.workers, n))
        merged: list[EpisodeRecord | None] = [None] * n
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_episode_chunk, cfg, args.checkpoint, args.env, chunk.tolist(), args.seed)
                for chunk in chunks
                if len(chunk)
            ]
            for fut in futures:
                for idx, record in fut.result():
                    merged[idx] = record
        report = _aggregate(merged, args.seed, components["episode"].max_steps)
    else:
        env = _make_env(args.env, components, seed=0)
        report = run_goal_benchmark(policy, env, n=n, seed=args.seed)

    save_report(report, os.path.join(out, "goal_benchmark.json"))
    emit_map(report, os.path.join(out, "goal_map.svg"), os.path.join(out, "goal_benchmark.csv"))
    for line in report.summary_lines():
        print(line)
    print(f"wrote {out}/goal_benchmark.json, .csv and goal_map.svg")
    return EXIT_OK


def _aggregate(episodes, seed, max_steps) -> GoalBenchmarkReport:
    episodes = list(episodes)
    n = len(episodes)
    reached_steps = [e.steps_to_reach for e in episodes if e.reached]
    return GoalBenchmarkReport(
        episodes=episodes,
        success_rate=sum(e.reached for e in episodes) / n,
        average_steps=float(np.mean([e.steps_to_reach for e in episodes])),
        average_steps_successful=float(np.mean(reached_steps)) if reached_steps else float("nan"),
        average_min_distance=float(np.mean([e.min_distance for e in episodes])),
        mean_episode_return=float(np.mean([e.episode_return for e in episodes])),
        seed=seed,
    )


def cmd_trajectory(args) -> int:
    cfg, components = _load(args)
    out = _out_dir(args)
    policy, _ = _policy_from_checkpoint(args.checkpoint)
    ev = components["evaluation"]
    radius = args.arc_radius if args.arc_radius is not None else ev["arc_radius"]
    degrees = args.arc_degrees if args.arc_degrees is not None else ev["arc_degrees"]
    count = args.waypoints if args.waypoints is not None else ev["arc_waypoints"]
    waypoints = make_arc_waypoints(radius, degrees, count)

    # one continuous run: give the episode enough steps for every waypoint
    from dataclasses import replace

    episode = replace(components["episode"], max_steps=components["episode"].max_steps * len(waypoints))
    env = _make_env(args.env, components, seed=0, episode=episode)
    write_resolved(cfg, os.path.join(out, "resolved_config.json"),
                   command="trajectory", seed=args.seed, env=args.env,
                   arc_radius=radius, arc_degrees=degrees, waypoints=count,
                   checkpoint=os.path.abspath(args.checkpoint))
    report = run_trajectory(policy, env, waypoints, seed=args.seed,
                            max_steps_per_goal=components["episode"].max_steps)
    save_report(report, os.path.join(out, "trajectory.json"))
    emit_trajectory_map(report, os.path.join(out, "trajectory_map.svg"), os.path.join(out, "trajectory.csv"))
    for line in report.summary_lines():
        print(line)
    print(f"wrote {out}/trajectory.json, .csv and trajectory_map.svg")
    return EXIT_OK


def cmd_demo_leg(args) -> int:
    cfg, components = _load(args)
    out = _out_dir(args)
    scene = components["scene"]
    if not args.with_gravity:
        scene = SceneParams(
            gravity=(0.0, 0.0, 0.0),
            time_step=scene.time_step,
            cg_tolerance=scene.cg_tolerance,
            cg_max_iterations=scene.cg_max_iterations,
        )
    model = build_leg_model(components["geometry"], components["material"],
                            components["total_mass"] / 3.0)
    cables = route_cables(model, components["geometry"], components["cables"])
    state = model.rest_state()
    substeps = components["episode"].control_substeps
    max_delta = components["cables"].rate_limit * scene.time_step
    write_resolved(cfg, os.path.join(out, "resolved_config.json"),
                   command="demo-leg", seed=args.seed, steps=args.steps,
                   amplitude=args.amplitude, with_gravity=bool(args.with_gravity))

    rows = []
    n_cables = len(cables)
    span = max(args.steps // n_cables, 1)
    try:
        for step in range(args.steps):
            cable_idx = min(step // span, n_cables - 1)
            phase = (step % span) / span
            amp = args.amplitude * (1.0 - abs(2.0 * phase - 1.0))  # triangle sweep
            targets = np.zeros(n_cables)
            targets[cable_idx] = amp
            for _ in range(substeps):
                new = []
                for c, target in zip(cables, targets):
                    delta = np.clip(target - c.displacement, -max_delta, max_delta)
                    new.append(c.with_displacement(c.displacement + float(delta)))
                cables = new
                state = step_implicit_euler(
                    model, state, scene, lambda s: cables_terms(cables, s, model.node_count)
                )
            tip = base_pose(model, state)
            rows.append(
                [step, state.time, *(c.displacement for c in cables), tip[0], tip[1], tip[2]]
            )
    except StepError as e:
        print(f"physics failed during sweep: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    path = os.path.join(out, "leg_demo.csv")
    import csv as _csv

    with open(path, "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(
            ["step", "time"] + [f"displacement_{i}" for i in range(n_cables)] + ["tip_x", "tip_y", "tip_z"]
        )
        for row in rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _out_dir(args)
    try:
        with open(args.report) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"report not found: {args.report}")
    except json.JSONDecodeError as e:
        print(f"report {args.report} is not valid JSON: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    kind = doc.get("kind")
    if kind == "goal_benchmark":
        episodes = [
            EpisodeRecord(
                goal=tuple(e["goal"]),
                reached=bool(e["reached"]),
                steps_to_reach=int(e["steps_to_reach"]),
                min_distance=float(e["min_distance"]),
                best_position=tuple(e["best_position"]),
                episode_return=float(e.get("episode_return", 0.0)),
            )
            for e in doc["episodes"]
        ]
        report = _aggregate(episodes, doc.get("seed", 0), 0)
        emit_map(report, os.path.join(out, "goal_map.svg"), os.path.join(out, "goal_benchmark.csv"))
        print(f"wrote {out}/goal_map.svg")
        return EXIT_OK
    print(f"cannot plot report kind {kind!r} (only goal_benchmark reports carry episode detail)",
          file=sys.stderr)
    return EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripod",
                                     description="Cable-driven tripedal soft robot toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", default=None, help="JSON config file (overlays packaged defaults)")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="master seed (64-bit)")
        p.add_argument("--out", default=None, help="output directory (fallback: $TRIPOD_OUT_DIR)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, e.g. --set episode.goal_band=[40,60]")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="worker pool size for episode fan-out")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="trained checkpoint JSON")

    p = sub.add_parser("train", help="train the PPO policy")
    common(p)
    p.add_argument("--env", choices=["robot", "point-mass"], default="robot")
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--n-envs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the 50-goal benchmark")
    common(p, checkpoint=True)
    p.add_argument("--env", choices=["robot", "point-mass"], default="robot")
    p.add_argument("--n-goals", type=int, default=None, help="episodes (default from config: 50)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trajectory", help="follow an arc of sequential goals")
    common(p, checkpoint=True)
    p.add_argument("--env", choices=["robot", "point-mass"], default="robot")
    p.add_argument("--arc-radius", type=float, default=None)
    p.add_argument("--arc-degrees", type=float, default=None)
    p.add_argument("--waypoints", type=int, default=None)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("demo-leg", help="fixed-base single leg, scripted cable sweep")
    common(p)
    p.add_argument("--steps", type=int, default=300, help="control steps in the sweep")
    p.add_argument("--amplitude", type=float, default=10.0, help="peak cable displacement, mm")
    p.add_argument("--with-gravity", action="store_true",
                   help="keep configured gravity (default: zero-g bending demo)")
    p.set_defaults(func=cmd_demo_leg)

    p = sub.add_parser("plot", help="regenerate the map SVG from a report JSON")
    common(p)
    p.add_argument("--report", required=True, help="goal_benchmark.json from a previous eval")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

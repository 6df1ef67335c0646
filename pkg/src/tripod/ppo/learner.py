"""Clipped-surrogate PPO with hand-written gradients and Adam.

The update maximizes min(rho A, clip(rho) A) - c_v * value MSE
+ c_e * entropy over shuffled minibatches, with per-minibatch advantage
normalization and global gradient-norm clipping. Everything is seeded and
deterministic; two runs with the same seed produce identical artifacts.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..rng import substream
from .buffer import RolloutBuffer, compute_gae
from .nets import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    PolicyParams,
    mlp_backward,
    mlp_forward,
    sample_action,
    tanh_log_det_jacobian,
)

__all__ = [
    "PPOConfig",
    "Adam",
    "RunningNormalizer",
    "ppo_loss_and_grad",
    "ppo_update",
    "train",
    "TrainingError",
    "save_checkpoint",
    "load_checkpoint",
    "deterministic_action",
]

CHECKPOINT_SCHEMA_VERSION = "tripod-checkpoint/1"
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    grad_norm_clip: float = 0.5
    horizon: int = 2048
    n_envs: int = 8
    total_steps: int = 1_000_000
    hidden: tuple[int, int] = (64, 64)
    log_std_init: float = -0.5
    checkpoint_every: int = 0   # updates; 0 = final only

    def validate(self) -> None:
        if not 0.0 <= self.discount <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("discount and gae_lambda must lie in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        for name in ("epochs", "minibatch_size", "horizon", "n_envs", "total_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class Adam:
    """Adaptive-moment gradient steps on the flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RunningNormalizer:
    """Running mean/variance observation normalizer with a static pre-scale
    (position dimensions are divided by 100 mm to unit order). Frozen at
    evaluation time."""

    def __init__(self, dim: int, static_scale: np.ndarray | None = None):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.static_scale = np.ones(dim) if static_scale is None else np.asarray(static_scale, dtype=float)
        self.frozen = False

    def update(self, raw_batch: np.ndarray) -> None:
        if self.frozen:
            return
        x = np.atleast_2d(raw_batch) * self.static_scale
        b_n = x.shape[0]
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        tot = self.count + b_n
        delta = b_mean - self.mean
        new_mean = self.mean + delta * (b_n / tot)
        m_a = self.var * self.count
        m_b = b_var * b_n
        self.var = (m_a + m_b + delta**2 * (self.count * b_n / tot)) / tot
        self.mean = new_mean
        self.count = tot

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(raw) * self.static_scale
        return (x - self.mean) / np.sqrt(self.var + 1e-8)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "count": self.count,
            "static_scale": self.static_scale.tolist(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "RunningNormalizer":
        norm = RunningNormalizer(len(doc["mean"]), np.asarray(doc["static_scale"]))
        norm.mean = np.asarray(doc["mean"], dtype=float)
        norm.var = np.asarray(doc["var"], dtype=float)
        norm.count = float(doc["count"])
        return norm


def default_obs_scale(obs_dim: int = 8) -> np.ndarray:
    """1/100 on the mm-valued dims (x, y, z, x_g, y_g), 1 on the angles."""
    scale = np.ones(obs_dim)
    scale[[0, 1, 2, obs_dim - 2, obs_dim - 1]] = 0.01
    return scale


# ---------------------------------------------------------------------------
# loss and gradient


def ppo_loss_and_grad(
    params: PolicyParams, batch: dict, config: PPOConfig
) -> tuple[float, dict, np.ndarray]:
    """Total loss, diagnostics, and its gradient as a flat vector.

    The batch holds normalized observations, pre-squash actions, behavior
    log-probs, normalized advantages, and value targets.
    """
    obs = batch["obs"]
    u = batch["pre_tanh"]
    logp_old = batch["log_probs"]
    adv = batch["advantages"]
    ret = batch["returns"]
    n = obs.shape[0]
    a_dim = u.shape[1]

    mean, p_acts = mlp_forward(params.policy_layers, obs)
    std = np.exp(params.log_std)
    z = (u - mean) / std
    logp_new = (
        -0.5 * np.sum(z**2, axis=1)
        - np.sum(params.log_std)
        - a_dim * _HALF_LOG_2PI
        - np.sum(tanh_log_det_jacobian(u), axis=1)
    )
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon)
    surr1 = ratio * adv
    surr2 = clipped * adv
    take_unclipped = surr1 <= surr2
    policy_loss = -np.mean(np.minimum(surr1, surr2))

    v_out, v_acts = mlp_forward(params.value_layers, obs)
    v = v_out[:, 0]
    value_loss = np.mean((v - ret) ** 2)

    entropy = float(np.sum(params.log_std) + 0.5 * a_dim * np.log(2.0 * np.pi * np.e))

    total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    # d total / d logp_new, selecting the active surrogate branch
    dlogp = -(adv * ratio * take_unclipped) / n
    dmean = dlogp[:, None] * (z / std)
    policy_grads = mlp_backward(params.policy_layers, p_acts, dmean)
    dlog_std = np.sum(dlogp[:, None] * (z**2 - 1.0), axis=0) - config.entropy_coef

    dv = (2.0 * config.value_coef / n) * (v - ret)
    value_grads = mlp_backward(params.value_layers, v_acts, dv[:, None])

    parts = []
    for gw, gb in policy_grads + value_grads:
        parts += [gw.ravel(), gb]
    parts.append(dlog_std)
    grad = np.concatenate(parts)

    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_epsilon)),
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(np.maximum(ratio, 1e-300)))),
    }
    return float(total), stats, grad


def _clip_grad_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    config: PPOConfig,
    bootstrap_values: np.ndarray,
    rng: np.random.Generator,
    adam: Adam | None = None,
) -> tuple[PolicyParams, dict]:
    """One PPO update over a full buffer: GAE, then epochs of shuffled
    minibatches with per-minibatch advantage normalization.

    On a non-finite loss the update is aborted: the incoming params are
    returned unchanged and stats carry aborted=True.
    """
    advantages, returns = compute_gae(buffer, config.discount, config.gae_lambda, bootstrap_values)
    flat = buffer.flat(advantages, returns)
    n = flat["obs"].shape[0]

    params = params.copy()
    backup = params.flatten()
    if adam is None:
        adam = Adam(backup.size, config.learning_rate)

    agg: dict[str, float] = {}
    batches = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            if len(idx) < 2:
                continue
            batch = {
                "obs": flat["obs"][idx],
                "pre_tanh": flat["pre_tanh"][idx],
                "log_probs": flat["log_probs"][idx],
                "advantages": normalize_advantages(flat["advantages"][idx]),
                "returns": flat["returns"][idx],
            }
            loss, stats, grad = ppo_loss_and_grad(params, batch, config)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                restored = params.copy()
                restored.set_flat(backup)
                return restored, {"aborted": True, "loss": float(loss)}
            grad, grad_norm = _clip_grad_norm(grad, config.grad_norm_clip)
            theta = adam.step(params.flatten(), grad)
            params.set_flat(theta)
            params.clamp_log_std()
            stats["grad_norm"] = grad_norm
            for k, val in stats.items():
                agg[k] = agg.get(k, 0.0) + val
            batches += 1
    out = {k: v / max(batches, 1) for k, v in agg.items()}
    out["aborted"] = False
    return params, out


# ---------------------------------------------------------------------------
# training loop


def deterministic_action(params: PolicyParams, obs_normalized: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.policy_layers, np.atleast_2d(obs_normalized))
    return np.tanh(out)


def train(
    make_vector_env,
    config: PPOConfig,
    seed: int,
    out_dir: str | None = None,
    log=None,
) -> tuple[PolicyParams, RunningNormalizer, list[dict]]:
    """Alternate rollout collection and PPO updates until total_steps.

    make_vector_env(n_envs, seed) must return a VectorEnv-compatible object
    whose observations expose as_vector(). Fully reproducible under seed;
    emits checkpoints and a learning-curve CSV into out_dir when given.
    """
    config.validate()
    venv = make_vector_env(config.n_envs, seed)
    n_envs = venv.n
    obs_list = venv.reset_all()
    obs_raw = np.stack([o.as_vector() for o in obs_list])
    obs_dim = obs_raw.shape[1]

    init_rng = substream(seed, "policy-init")
    action_rng = substream(seed, "action")
    minibatch_rng = substream(seed, "minibatch")
    from ..environment import ACTION_DIM

    params = PolicyParams.init(obs_dim, ACTION_DIM, config.hidden, init_rng, config.log_std_init)
    normalizer = RunningNormalizer(obs_dim, default_obs_scale(obs_dim))
    adam = Adam(params.flatten().size, config.learning_rate)

    steps_per_update = config.horizon * n_envs
    n_updates = max(1, config.total_steps // steps_per_update)
    history: list[dict] = []
    consecutive_aborts = 0

    ep_return = np.zeros(n_envs)
    ep_length = np.zeros(n_envs, dtype=int)

    for update in range(1, n_updates + 1):
        buffer = RolloutBuffer(config.horizon, n_envs, obs_dim, ACTION_DIM)
        window_returns: list[float] = []
        window_lengths: list[int] = []
        window_success: list[bool] = []
        for _ in range(config.horizon):
            normalizer.update(obs_raw)
            obs_n = normalizer.normalize(obs_raw)
            actions, logp, values, pre_tanh = sample_action(params, obs_n, action_rng)
            results = venv.step(list(actions))
            rewards = np.array([r.reward for r in results])
            terminated = np.array([r.terminated for r in results])
            truncated = np.array([r.truncated for r in results])
            trunc_values = np.zeros(n_envs)
            for i, r in enumerate(results):
                ep_return[i] += r.reward
                ep_length[i] += 1
                if r.truncated:
                    final = r.info["final_observation"].as_vector()
                    trunc_values[i] = _value_of(params, normalizer, final)
                if r.terminated or r.truncated:
                    window_returns.append(float(ep_return[i]))
                    window_lengths.append(int(ep_length[i]))
                    window_success.append(bool(r.terminated))
                    ep_return[i] = 0.0
                    ep_length[i] = 0
            buffer.add(obs_n, actions, pre_tanh, logp, rewards, values, terminated, truncated, trunc_values)
            obs_raw = np.stack([r.observation.as_vector() for r in results])

        tail_values = _value_of(params, normalizer, obs_raw)
        params, stats = ppo_update(params, buffer, config, tail_values, minibatch_rng, adam)
        if stats.get("aborted"):
            consecutive_aborts += 1
            if consecutive_aborts >= 3:
                raise TrainingError(f"3 consecutive non-finite updates (last loss {stats.get('loss')})")
        else:
            consecutive_aborts = 0

        row = {
            "update": update,
            "env_steps": update * steps_per_update,
            "episodes": len(window_returns),
            "mean_episode_return": float(np.mean(window_returns)) if window_returns else float("nan"),
            "mean_episode_length": float(np.mean(window_lengths)) if window_lengths else float("nan"),
            "success_rate": float(np.mean(window_success)) if window_success else float("nan"),
            "policy_loss": stats.get("policy_loss", float("nan")),
            "value_loss": stats.get("value_loss", float("nan")),
            "entropy": stats.get("entropy", float("nan")),
            "clip_fraction": stats.get("clip_fraction", float("nan")),
            "approx_kl": stats.get("approx_kl", float("nan")),
        }
        history.append(row)
        if log is not None:
            log(row)
        if out_dir and config.checkpoint_every and update % config.checkpoint_every == 0:
            save_checkpoint(
                os.path.join(out_dir, f"checkpoint_{update:05d}.json"),
                params,
                normalizer,
                config,
                seed=seed,
                env_steps=row["env_steps"],
                action_rng_state=action_rng.bit_generator.state,
            )

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(out_dir, "checkpoint.json"),
            params,
            normalizer,
            config,
            seed=seed,
            env_steps=n_updates * steps_per_update,
            action_rng_state=action_rng.bit_generator.state,
        )
        write_learning_curve(os.path.join(out_dir, "learning_curve.csv"), history)
    return params, normalizer, history


def _value_of(params: PolicyParams, normalizer: RunningNormalizer, obs_raw: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.value_layers, normalizer.normalize(obs_raw))
    v = out[:, 0]
    return v if v.size > 1 else float(v[0])


CURVE_COLUMNS = [
    "update",
    "env_steps",
    "episodes",
    "mean_episode_return",
    "mean_episode_length",
    "success_rate",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "approx_kl",
]


def write_learning_curve(path: str, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        for row in history:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CURVE_COLUMNS])


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path: str,
    params: PolicyParams,
    normalizer: RunningNormalizer,
    config: PPOConfig,
    **extras,
) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "params": {
            "policy_layers": [[w.tolist(), b.tolist()] for w, b in params.policy_layers],
            "value_layers": [[w.tolist(), b.tolist()] for w, b in params.value_layers],
            "log_std": params.log_std.tolist(),
            "meta": params.meta,
        },
        "normalizer": normalizer.to_dict(),
        "config": asdict(config),
        "extras": _jsonable(extras),
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


def load_checkpoint(path: str) -> dict:
    with open(path) as f:
        doc = json.load(f)
    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema {version!r}")
    p = doc["params"]
    params = PolicyParams(
        policy_layers=[(np.asarray(w), np.asarray(b)) for w, b in p["policy_layers"]],
        value_layers=[(np.asarray(w), np.asarray(b)) for w, b in p["value_layers"]],
        log_std=np.asarray(p["log_std"]),
        meta=p.get("meta", {}),
    )
    params.validate()
    cfg_fields = {f.name for f in PPOConfig.__dataclass_fields__.values()}
    cfg_doc = {k: v for k, v in doc["config"].items() if k in cfg_fields}
    if "hidden" in cfg_doc:
        cfg_doc["hidden"] = tuple(cfg_doc["hidden"])
    return {
        "params": params,
        "normalizer": RunningNormalizer.from_dict(doc["normalizer"]),
        "config": PPOConfig(**cfg_doc),
        "extras": doc.get("extras", {}),
    }

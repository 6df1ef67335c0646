"""Policy and value networks in plain numpy.

The policy is a tanh-squashed Gaussian: an MLP maps the (normalized)
observation to the pre-squash mean, a state-independent log-std vector
sets exploration, and actions are tanh(u) with the change-of-variables
correction in the log-density. Gradients are hand-written so they can be
verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PolicyParams",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "mlp_forward",
    "policy_mean",
    "value",
    "sample_action",
    "evaluate_log_prob",
    "log_prob_pre_tanh",
    "tanh_log_det_jacobian",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


@dataclass
class PolicyParams:
    """Weights of the policy mean MLP, the value MLP, and the log-std vector.

    Layer lists hold (W, b) with W of shape (fan_in, fan_out).
    """

    policy_layers: list[tuple[np.ndarray, np.ndarray]]
    value_layers: list[tuple[np.ndarray, np.ndarray]]
    log_std: np.ndarray
    meta: dict = field(default_factory=dict)

    @staticmethod
    def init(
        obs_dim: int,
        action_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
        log_std_init: float = -0.5,
    ) -> "PolicyParams":
        def make(sizes, final_gain):
            layers = []
            gains = [np.sqrt(2.0)] * (len(sizes) - 2) + [final_gain]
            for (n_in, n_out), gain in zip(zip(sizes[:-1], sizes[1:]), gains):
                layers.append((_orthogonal(rng, n_in, n_out, gain), np.zeros(n_out)))
            return layers

        sizes_p = [obs_dim, *hidden, action_dim]
        sizes_v = [obs_dim, *hidden, 1]
        return PolicyParams(
            policy_layers=make(sizes_p, 0.01),
            value_layers=make(sizes_v, 1.0),
            log_std=np.full(action_dim, float(np.clip(log_std_init, LOG_STD_MIN, LOG_STD_MAX))),
            meta={"obs_dim": obs_dim, "action_dim": action_dim, "hidden": list(hidden)},
        )

    # -- flat parameter vector (Adam / finite differences) -------------------

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in self.policy_layers + self.value_layers:
            parts += [w.ravel(), b]
        parts.append(self.log_std)
        return np.concatenate(parts)

    def set_flat(self, vec: np.ndarray) -> None:
        k = 0
        for layers in (self.policy_layers, self.value_layers):
            for i, (w, b) in enumerate(layers):
                layers[i] = (
                    vec[k : k + w.size].reshape(w.shape).copy(),
                    vec[k + w.size : k + w.size + b.size].copy(),
                )
                k += w.size + b.size
        self.log_std = vec[k : k + self.log_std.size].copy()
        k += self.log_std.size
        assert k == len(vec)

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            policy_layers=[(w.copy(), b.copy()) for w, b in self.policy_layers],
            value_layers=[(w.copy(), b.copy()) for w, b in self.value_layers],
            log_std=self.log_std.copy(),
            meta=dict(self.meta),
        )

    def validate(self) -> None:
        flat = self.flatten()
        if not np.all(np.isfinite(flat)):
            raise FloatingPointError("non-finite network parameters")
        if np.any(self.log_std < LOG_STD_MIN - 1e-9) or np.any(self.log_std > LOG_STD_MAX + 1e-9):
            raise ValueError("log_std outside allowed range")


def mlp_forward(layers, x: np.ndarray):
    """Forward pass with tanh hidden activations and a linear head.
    Returns (output, activations) where activations[i] is the input to layer i."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if i < len(layers) - 1 else z
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, dout):
    """Gradients of all layer weights and of the input, given d loss / d out."""
    grads = [None] * len(layers)
    delta = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in = acts[i]
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - acts[i] ** 2)
    return grads


def policy_mean(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.policy_layers, np.atleast_2d(obs))
    return out


def value(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.value_layers, np.atleast_2d(obs))
    return out[:, 0]


def tanh_log_det_jacobian(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) per element, numerically stable."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def log_prob_pre_tanh(params: PolicyParams, obs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Log-density of the squashed action tanh(u) given obs, evaluated from
    the pre-squash sample (exact; no atanh round trip)."""
    mean = policy_mean(params, obs)
    std = np.exp(params.log_std)
    z = (np.atleast_2d(u) - mean) / std
    gauss = -0.5 * np.sum(z**2, axis=1) - np.sum(params.log_std) - u.shape[-1] * _HALF_LOG_2PI
    return gauss - np.sum(tanh_log_det_jacobian(np.atleast_2d(u)), axis=1)


def sample_action(
    params: PolicyParams, observation: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample squashed actions for a batch of observations.

    Returns (actions, log_probs, values, pre_tanh). Raises on non-finite
    network output, which signals training divergence.
    """
    obs = np.atleast_2d(observation)
    mean = policy_mean(params, obs)
    if not np.all(np.isfinite(mean)):
        raise FloatingPointError("non-finite policy mean")
    std = np.exp(params.log_std)
    u = mean + std * rng.standard_normal(mean.shape)
    action = np.tanh(u)
    logp = log_prob_pre_tanh(params, obs, u)
    v = value(params, obs)
    if not (np.all(np.isfinite(logp)) and np.all(np.isfinite(v))):
        raise FloatingPointError("non-finite log-prob or value")
    return action, logp, v, u


def evaluate_log_prob(params: PolicyParams, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Log-density of a squashed action; inverts the squash with atanh."""
    a = np.clip(np.atleast_2d(action), -1.0 + 1e-12, 1.0 - 1e-12)
    u = np.arctanh(a)
    return log_prob_pre_tanh(params, obs, u)

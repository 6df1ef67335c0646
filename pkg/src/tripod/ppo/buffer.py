"""Rollout storage and generalized advantage estimation.

The buffer holds horizon x n_envs transitions. Episode ends cut the GAE
recursion; time-limit truncations bootstrap with the value of the final
observation, terminations (goal reached / failure) do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RolloutBuffer", "compute_gae"]


@dataclass
class RolloutBuffer:
    horizon: int
    n_envs: int
    obs_dim: int
    action_dim: int

    def __post_init__(self):
        t, n = self.horizon, self.n_envs
        self.obs = np.zeros((t, n, self.obs_dim))
        self.actions = np.zeros((t, n, self.action_dim))
        self.pre_tanh = np.zeros((t, n, self.action_dim))
        self.log_probs = np.zeros((t, n))
        self.rewards = np.zeros((t, n))
        self.values = np.zeros((t, n))
        self.terminated = np.zeros((t, n), dtype=bool)
        self.truncated = np.zeros((t, n), dtype=bool)
        # V(final observation) for truncated steps, 0 elsewhere
        self.truncation_values = np.zeros((t, n))
        self.pos = 0

    @property
    def capacity(self) -> int:
        return self.horizon * self.n_envs

    @property
    def full(self) -> bool:
        return self.pos == self.horizon

    def add(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        pre_tanh: np.ndarray,
        log_probs: np.ndarray,
        rewards: np.ndarray,
        values: np.ndarray,
        terminated: np.ndarray,
        truncated: np.ndarray,
        truncation_values: np.ndarray,
    ) -> None:
        if self.full:
            raise RuntimeError("rollout buffer is full")
        t = self.pos
        self.obs[t] = obs
        self.actions[t] = actions
        self.pre_tanh[t] = pre_tanh
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.terminated[t] = terminated
        self.truncated[t] = truncated
        self.truncation_values[t] = truncation_values
        self.pos += 1

    def reset(self) -> None:
        self.pos = 0

    def flat(self, advantages: np.ndarray, returns: np.ndarray) -> dict:
        """Flatten (T, N, ...) arrays to (T*N, ...) minibatch fodder."""
        t, n = self.horizon, self.n_envs
        return {
            "obs": self.obs.reshape(t * n, -1),
            "pre_tanh": self.pre_tanh.reshape(t * n, -1),
            "log_probs": self.log_probs.reshape(t * n),
            "advantages": advantages.reshape(t * n),
            "returns": returns.reshape(t * n),
        }


def compute_gae(
    buffer: RolloutBuffer,
    gamma: float,
    lam: float,
    bootstrap_values: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(gamma, lam) over the full buffer.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - ended_t) - V(s_t), where a
    truncated step substitutes its stored final-observation value (time
    limits bootstrap, terminations do not). bootstrap_values supplies
    V(s_T) for rollout tails that end mid-episode.
    """
    if not buffer.full:
        raise RuntimeError("advantages are computed only over a full buffer")
    t_max, n = buffer.horizon, buffer.n_envs
    advantages = np.zeros((t_max, n))
    last_adv = np.zeros(n)
    next_values = np.asarray(bootstrap_values, dtype=float)
    for t in range(t_max - 1, -1, -1):
        ended = buffer.terminated[t] | buffer.truncated[t]
        v_next = np.where(
            buffer.terminated[t],
            0.0,
            np.where(buffer.truncated[t], buffer.truncation_values[t], next_values),
        )
        delta = buffer.rewards[t] + gamma * v_next - buffer.values[t]
        last_adv = delta + gamma * lam * (~ended) * last_adv
        advantages[t] = last_adv
        next_values = buffer.values[t]
    returns = advantages + buffer.values
    return advantages, returns

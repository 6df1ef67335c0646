"""From-scratch PPO for continuous actions: tanh-squashed Gaussian policy,
GAE advantages, clipped surrogate updates with Adam."""

from .buffer import RolloutBuffer, compute_gae
from .learner import (
    Adam,
    PPOConfig,
    RunningNormalizer,
    TrainingError,
    default_obs_scale,
    deterministic_action,
    load_checkpoint,
    ppo_loss_and_grad,
    ppo_update,
    save_checkpoint,
    train,
    write_learning_curve,
)
from .nets import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    PolicyParams,
    evaluate_log_prob,
    log_prob_pre_tanh,
    policy_mean,
    sample_action,
    value,
)

__all__ = [
    "RolloutBuffer",
    "compute_gae",
    "Adam",
    "PPOConfig",
    "RunningNormalizer",
    "TrainingError",
    "default_obs_scale",
    "deterministic_action",
    "load_checkpoint",
    "ppo_loss_and_grad",
    "ppo_update",
    "save_checkpoint",
    "train",
    "write_learning_curve",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "PolicyParams",
    "evaluate_log_prob",
    "log_prob_pre_tanh",
    "policy_mean",
    "sample_action",
    "value",
]

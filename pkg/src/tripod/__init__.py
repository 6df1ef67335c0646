"""Cable-driven tripedal soft robot: simulation, RL environment, PPO, evaluation."""

__version__ = "0.1.0"

"""Control strategies for the growth simulator and their evaluation."""

from .evaluate import EvalReport, evaluate_strategy
from .policy import MLP, Policy
from .ppo import PPOConfig, TrainReport, TrainingError, clipped_surrogate, ppo_loss, train_policy
from .strategies import RandomStrategy, ReplayStrategy, SampledEnvStrategy, random_strategy, replay_strategy

__all__ = [
    "EvalReport", "evaluate_strategy", "MLP", "Policy", "PPOConfig", "TrainReport", "TrainingError",
    "clipped_surrogate", "ppo_loss", "train_policy", "RandomStrategy", "ReplayStrategy",
    "SampledEnvStrategy", "random_strategy", "replay_strategy",
]

"""Policy, clipped-surrogate updates, episodes and training."""

from .network import MLP
from .policy import PolicyParams, policy_forward, sample_action
from .ppo import Batch, PPOConfig, UpdateAborted, loss_and_grads, ppo_update
from .rollout import Metrics, denormalize_state, evaluate, normalize_state, run_episode
from .trainer import Trainer, load_checkpoint, read_metrics, samples_to_threshold, save_checkpoint

__all__ = [
    "MLP", "Batch", "Metrics", "PPOConfig", "PolicyParams", "Trainer", "UpdateAborted",
    "denormalize_state", "evaluate", "load_checkpoint", "loss_and_grads", "normalize_state",
    "policy_forward", "ppo_update", "read_metrics", "run_episode", "sample_action",
    "samples_to_threshold", "save_checkpoint",
]

"""PPO training of Gaussian MLP policies over the batched simulator."""
from .checkpoint import (Checkpoint, CheckpointDimensionError, CheckpointFormatError, load_checkpoint,
                         save_checkpoint)
from .policy import PolicyParams, PolicySpec, gaussian_log_prob, init_policy, policy_forward
from .ppo import Adam, PpoConfig, RolloutBuffer, RunningNormalizer, TrainingDiverged, compute_gae, ppo_update
from .train import METRIC_COLUMNS, TrainResult, Trainer, TrainSettings, corridor_specs, train

__all__ = [
    "Checkpoint", "CheckpointDimensionError", "CheckpointFormatError", "load_checkpoint", "save_checkpoint",
    "PolicyParams", "PolicySpec", "gaussian_log_prob", "init_policy", "policy_forward", "Adam", "PpoConfig",
    "RolloutBuffer", "RunningNormalizer", "TrainingDiverged", "compute_gae", "ppo_update", "METRIC_COLUMNS",
    "TrainResult", "Trainer", "TrainSettings", "corridor_specs", "train",
]

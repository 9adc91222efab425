"""Batched rigid-body simulation of the quadruped in pyramid environments."""
from .config import (FAILED, FLIPPED, N_PROXIES, RUNNING, STATUS_NAMES, SUCCESS, TIMEOUT,
                     RandomizationConfig, SimConfig)
from .env import (EnvInstance, RandomizedParams, SimulationDiverged, StepBatch, StepResult, VecEnv,
                  batch_step, check_termination, curriculum_update, reset, resolve_workers, step,
                  termination_status)

__all__ = [
    "FAILED", "FLIPPED", "N_PROXIES", "RUNNING", "STATUS_NAMES", "SUCCESS", "TIMEOUT",
    "RandomizationConfig", "SimConfig", "EnvInstance", "RandomizedParams", "SimulationDiverged",
    "StepBatch", "StepResult", "VecEnv", "batch_step", "check_termination", "curriculum_update",
    "reset", "resolve_workers", "step", "termination_status",
]

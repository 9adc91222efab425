"""Throughput benchmark for batched stepping."""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .runconfig import RunConfig, env_set
from .sim import VecEnv


@dataclass
class BenchResult:
    envs: int
    steps: int
    workers: int
    seconds: float
    phases: dict          # seconds per batched step, by phase
    state_digest: str

    @property
    def steps_per_second(self) -> float:
        return self.envs * self.steps / self.seconds

    def phase_fractions(self) -> dict:
        total = sum(self.phases.values())
        return {k: v / total for k, v in self.phases.items()}


def run_benchmark(cfg: RunConfig, envs: int = 1024, steps: int = 50, warmup: int = 5, difficulty: str = "hard",
                  workers=None) -> BenchResult:
    specs = env_set(difficulty, envs, cfg.env_seed)
    vec = VecEnv(specs, cfg.mode_enum, cfg.sim, cfg.reward, cfg.robot, cfg.grid, seed=cfg.seed, workers=workers)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xBE]))
    try:
        vec.reset()
        for _ in range(warmup):
            vec.step(0.3 * rng.standard_normal((envs, 12)))
        for k in vec.timings:
            vec.timings[k] = 0.0
        actions = 0.3 * rng.standard_normal((steps, envs, 12))
        t0 = time.perf_counter()
        for a in actions:
            vec.step(a)
        elapsed = time.perf_counter() - t0
        digest = hashlib.sha256(b"".join(np.ascontiguousarray(a).tobytes()
                                         for a in (vec.pos, vec.quat, vec.q, vec.obs))).hexdigest()
        phases = {k: v / steps for k, v in vec.timings.items()}
        return BenchResult(envs, steps, vec.workers, elapsed, phases, digest)
    finally:
        vec.close()

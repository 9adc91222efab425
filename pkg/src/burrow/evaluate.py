"""Checkpoint evaluation: every environment runs several trials with distinct reset seeds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .control import Mode
from .learn.checkpoint import Checkpoint
from .learn.policy import policy_forward, sample_actions
from .learn.train import ACTION_CLIP
from .runconfig import DIFFICULTIES, RunConfig, env_set
from .sim import RUNNING, STATUS_NAMES, SUCCESS, VecEnv
from .sim.trajlog import TrajectoryLogger
from .world import EnvSpec

TRIAL_COLUMNS = ("difficulty", "env_index", "env_seed", "trial", "reset_seed", "status", "N_c", "steps")
SUMMARY_COLUMNS = ("mode", "difficulty", "envs", "trials", "successes", "success_rate", "mean_Nc", "std_Nc",
                   "mean_steps_success", "timeouts", "flips")


@dataclass
class DifficultyResult:
    difficulty: str
    envs: int
    trials_per_env: int
    status: np.ndarray          # (envs, trials) status codes
    n_c: np.ndarray             # (envs, trials) cumulative collision counts
    steps: np.ndarray           # (envs, trials) episode lengths
    env_seeds: list
    reset_seeds: np.ndarray     # (envs, trials)

    @property
    def trials(self) -> int:
        return int(self.status.size)

    @property
    def successes(self) -> int:
        return int(np.sum(self.status == SUCCESS))

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def _over_success(self, arr, fn) -> float:
        ok = self.status == SUCCESS
        return float(fn(arr[ok])) if ok.any() else math.nan

    @property
    def mean_nc(self) -> float:
        """Collision count averaged over successful trials only."""
        return self._over_success(self.n_c, np.mean)

    @property
    def std_nc(self) -> float:
        return self._over_success(self.n_c, np.std)

    @property
    def mean_steps_success(self) -> float:
        return self._over_success(self.steps, np.mean)

    def count(self, name: str) -> int:
        return int(np.sum(self.status == STATUS_NAMES.index(name)))


@dataclass
class EvalReport:
    mode: Mode
    results: dict = field(default_factory=dict)   # difficulty -> DifficultyResult

    def summary_rows(self) -> list[dict]:
        rows = []
        for d, r in self.results.items():
            rows.append({"mode": self.mode.value, "difficulty": d, "envs": r.envs, "trials": r.trials,
                         "successes": r.successes, "success_rate": r.success_rate, "mean_Nc": r.mean_nc,
                         "std_Nc": r.std_nc, "mean_steps_success": r.mean_steps_success,
                         "timeouts": r.count("timeout"), "flips": r.count("flipped")})
        return rows

    def write_csv(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        summary = out_dir / "eval_summary.csv"
        with summary.open("w", newline="") as fh:
            w = csv.DictWriter(fh, SUMMARY_COLUMNS)
            w.writeheader()
            for row in self.summary_rows():
                w.writerow({k: _cell(v) for k, v in row.items()})
        trials = out_dir / "eval_trials.csv"
        with trials.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRIAL_COLUMNS)
            for d, r in self.results.items():
                for i in range(r.envs):
                    for k in range(r.trials_per_env):
                        w.writerow([d, i, r.env_seeds[i], k, int(r.reset_seeds[i, k]),
                                    STATUS_NAMES[int(r.status[i, k])], int(r.n_c[i, k]), int(r.steps[i, k])])
        return summary, trials

    def table(self) -> str:
        """Approach rows, difficulty columns: success rate and mean collisions over successes."""
        diffs = list(self.results)
        width = max(14, len(self.mode.value) + 2)
        head = "approach".ljust(width) + "".join(d.rjust(10) for d in diffs)
        rule = "-" * len(head)
        sr = self.mode.value.ljust(width) + "".join(f"{100 * self.results[d].success_rate:9.1f}%" for d in diffs)
        nc = self.mode.value.ljust(width) + "".join(
            ("n/a" if math.isnan(self.results[d].mean_nc) else f"{self.results[d].mean_nc:.2f}").rjust(10)
            for d in diffs)
        trials = "trials".ljust(width) + "".join(str(self.results[d].trials).rjust(10) for d in diffs)
        return "\n".join(["success rate", head, rule, sr, "", "mean collisions (successful trials)", head, rule,
                          nc, "", trials])


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def trial_seeds(seed: int, difficulty: str, envs: int, trials: int) -> np.ndarray:
    """(envs, trials) reset seeds, distinct per trial and independent of worker count."""
    ss = np.random.SeedSequence([int(seed), 0xE7, DIFFICULTIES.index(difficulty)])
    return ss.generate_state(envs * trials, dtype=np.uint64).reshape(trials, envs).T.copy()


class PolicyRunner:
    def __init__(self, ck: Checkpoint, stochastic: bool = False, seed: int = 0):
        self.ck = ck
        self.stochastic = stochastic
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE8]))

    def __call__(self, obs):
        x = self.ck.normalizer.normalize(obs)
        mean, log_std, _ = policy_forward(self.ck.spec, self.ck.params, x)
        act = sample_actions(mean, log_std, self.rng) if self.stochastic else mean
        return np.clip(act.astype(np.float64), -ACTION_CLIP, ACTION_CLIP)


def run_trials(policy, specs: Sequence[EnvSpec], seeds: np.ndarray, cfg: RunConfig, workers=None,
               log_path=None, log_envs: Optional[int] = None):
    """Run ``seeds.shape[1]`` trials for each spec; returns (status, n_c, steps) arrays of ``seeds.shape``."""
    envs, trials = seeds.shape
    rows = [s for _ in range(trials) for s in specs]
    vec = VecEnv(rows, cfg.mode_enum, cfg.sim, cfg.reward, cfg.robot, cfg.grid, seed=cfg.seed, workers=workers,
                 auto_reset=False)
    logger = None
    try:
        obs = vec.reset(seeds.T.reshape(-1))
        if log_path is not None:
            keep = [k * envs + i for k in range(trials) for i in range(min(envs, log_envs or envs))]
            logger = TrajectoryLogger(log_path, vec, keep)
            logger.begin()
        status = np.full(vec.n, RUNNING, dtype=np.int64)
        n_c = np.zeros(vec.n, dtype=np.int64)
        steps = np.zeros(vec.n, dtype=np.int64)
        while (status == RUNNING).any():
            running = status == RUNNING
            actions = policy(obs)
            b = vec.step(actions)
            if logger is not None:
                logger.record(b, actions, running)
            fin = np.nonzero(b.done)[0]
            status[fin] = b.status[fin]
            n_c[fin] = b.episode_nc[fin]
            steps[fin] = b.episode_len[fin]
            obs = b.obs
    finally:
        if logger is not None:
            logger.close()
        vec.close()
    shape = (trials, envs)
    return status.reshape(shape).T, n_c.reshape(shape).T, steps.reshape(shape).T


def evaluate(ck: Checkpoint, cfg: RunConfig, out_dir=None, difficulties: Optional[Sequence[str]] = None,
             envs_per_difficulty: Optional[int] = None, trials: Optional[int] = None, workers=None,
             log_envs: Optional[int] = None) -> EvalReport:
    es = cfg.eval
    difficulties = list(difficulties or es.difficulties)
    n = envs_per_difficulty or es.envs_per_difficulty
    t = trials or es.trials
    policy = PolicyRunner(ck, es.stochastic, cfg.seed)
    report = EvalReport(cfg.mode_enum)
    for d in difficulties:
        specs = env_set(d, n, es.env_seed)
        seeds = trial_seeds(cfg.seed, d, n, t)
        log_path = None
        if out_dir is not None and log_envs:
            log_path = Path(out_dir) / f"trajectories_{d}.jsonl"
        status, n_c, steps = run_trials(policy, specs, seeds, cfg, workers, log_path, log_envs)
        report.results[d] = DifficultyResult(d, n, t, status, n_c, steps, [s.seed for s in specs], seeds)
    return report

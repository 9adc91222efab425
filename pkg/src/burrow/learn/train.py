"""On-policy training loop over the batched simulator."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..control import Mode, RewardConfig
from ..planner import CandidateGrid
from ..robot import RobotParams
from ..sim import SUCCESS, SimConfig, VecEnv, curriculum_update
from ..sim.env import CURRICULUM_START
from ..world import Difficulty, EnvSpec
from .checkpoint import Checkpoint, save_checkpoint
from .policy import PolicySpec, gaussian_log_prob, init_policy, policy_forward, sample_actions
from .ppo import Adam, PpoConfig, RolloutBuffer, RunningNormalizer, TrainingDiverged, ppo_update

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("update", "env_steps", "mean_reward", "success_rate", "mean_Nc", "x_g", "policy_loss",
                  "value_loss", "entropy", "kl")
CHECKPOINT_NAME = "policy.brsm"
STATE_NAME = "trainer_state.npz"
METRICS_NAME = "metrics.csv"
ACTION_CLIP = 10.0


@dataclass(frozen=True)
class TrainSettings:
    total_steps: int = 20_000_000
    checkpoint_every: int = 50
    curriculum_window: int = 1000
    curriculum_min_episodes: int = 100
    hidden: tuple[int, ...] = (512, 256, 128)
    init_log_std: float = -1.0

    def problems(self) -> list[str]:
        errs = []
        if self.total_steps < 1:
            errs.append("total_steps must be >= 1")
        if self.checkpoint_every < 1:
            errs.append("checkpoint_every must be >= 1")
        if self.curriculum_window < 1 or not 1 <= self.curriculum_min_episodes <= self.curriculum_window:
            errs.append("curriculum_min_episodes must lie in [1, curriculum_window]")
        if not self.hidden or min(self.hidden) < 1:
            errs.append("hidden sizes must be positive")
        return errs


@dataclass
class TrainResult:
    out_dir: Path
    updates: int
    env_steps: int
    metrics: list = field(default_factory=list)
    x_g_trace: list = field(default_factory=list)


def corridor_specs(count: int, goal_distance: float = 1.0) -> list[EnvSpec]:
    """Obstacle-free environments with the goal ``goal_distance`` ahead of the start."""
    base = EnvSpec(seed=0, difficulty=Difficulty.EASY, floor_pyramids=(), ceiling_pyramids=())
    goal = (base.start.x + goal_distance, base.start.y)
    return [EnvSpec(seed=k, difficulty=Difficulty.EASY, floor_pyramids=(), ceiling_pyramids=(), goal_xy=goal)
            for k in range(count)]


class Trainer:
    def __init__(self, mode, specs: Sequence[EnvSpec], out_dir, seed: int = 0, workers: Optional[int] = None,
                 sim: SimConfig = SimConfig(), reward: RewardConfig = RewardConfig(),
                 robot: RobotParams = RobotParams(), grid: CandidateGrid = CandidateGrid(),
                 ppo: PpoConfig = PpoConfig(), settings: TrainSettings = TrainSettings()):
        errs = settings.problems()
        if errs:
            raise ValueError("; ".join(errs))
        self.mode = Mode.parse(mode)
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ppo = ppo
        self.settings = settings
        self.reward_cfg = reward
        self.curriculum = self.mode is Mode.END_TO_END
        self.vec = VecEnv(specs, self.mode, sim, reward, robot, grid, seed=seed, workers=workers,
                          goal_x=CURRICULUM_START if self.curriculum else None)
        self.spec = PolicySpec(self.mode.obs_dim, hidden=tuple(settings.hidden),
                               value_hidden=tuple(settings.hidden), init_log_std=settings.init_log_std)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA1]))
        self.params = init_policy(self.spec, self.rng)
        self.opt = Adam(self.params.blocks(), ppo.learning_rate)
        self.norm = RunningNormalizer(self.mode.obs_dim)
        self.window = deque(maxlen=settings.curriculum_window)
        self.update = 0
        self.env_steps = 0
        self.obs = self.vec.reset()
        self.norm.update(self.obs)
        n = self.vec.n
        self.steps_per_update = ppo.horizon * n
        self.n_updates = max(1, math.ceil(settings.total_steps / self.steps_per_update))

    # ------------------------------------------------------------------ rollout
    def _act(self, obs):
        x = self.norm.normalize(obs)
        mean, log_std, value = policy_forward(self.spec, self.params, x)
        actions = sample_actions(mean, log_std, self.rng)
        lp = gaussian_log_prob(actions.astype(np.float64), mean.astype(np.float64), log_std.astype(np.float64))
        return x, actions, lp, value.astype(np.float64)

    def _value(self, obs):
        _, _, value = policy_forward(self.spec, self.params, self.norm.normalize(obs))
        return value.astype(np.float64)

    def collect(self):
        n = self.vec.n
        buf = RolloutBuffer.empty(self.ppo.horizon, n, self.mode.obs_dim)
        episodes = []
        rewards = []
        progress = self.update / max(1, self.n_updates)
        self.vec.explore_weight = self.reward_cfg.explore_weight(progress)
        while not buf.full:
            x, actions, lp, value = self._act(self.obs)
            b = self.vec.step(np.clip(actions, -ACTION_CLIP, ACTION_CLIP).astype(np.float64))
            r = b.reward.astype(np.float64)
            rewards.append(r)
            if b.time_out.any():
                # a time limit is not a true terminal: bootstrap from the state it cut off
                ids = np.nonzero(b.time_out)[0]
                r = r.copy()
                r[ids] += self.ppo.gamma * self._value(b.terminal_obs[ids])
            buf.add(x, actions, lp, value, r, b.done.astype(np.float64))
            for e in np.nonzero(b.done)[0]:
                episodes.append((int(b.status[e] == SUCCESS), int(b.episode_nc[e])))
            self.obs = b.obs
            self.norm.update(self.obs)
        buf.bootstrap = self._value(self.obs)
        self.env_steps += buf.horizon * n
        return buf, episodes, float(np.mean(rewards))

    # ------------------------------------------------------------------ loop
    def step_update(self) -> dict:
        buf, episodes, mean_reward = self.collect()
        try:
            stats = ppo_update(buf, self.ppo, self.spec, self.params, self.opt, self.rng)
        except TrainingDiverged as exc:
            self._dump_divergence(exc)
            raise
        if not self.params.all_finite():
            exc = TrainingDiverged("non-finite parameters after update")
            self._dump_divergence(exc)
            raise exc
        self.update += 1
        for ok, _ in episodes:
            self.window.append(ok)
        if self.curriculum and len(self.window) >= self.settings.curriculum_min_episodes:
            new = curriculum_update(self.vec.goal_x, float(np.mean(self.window)))
            if new != self.vec.goal_x:
                log.info("curriculum: goal x %.2f -> %.2f", self.vec.goal_x, new)
                self.vec.goal_x = new
                self.window.clear()
        done_succ = [ok for ok, _ in episodes]
        nc_succ = [nc for ok, nc in episodes if ok]
        return {
            "update": self.update,
            "env_steps": self.env_steps,
            "mean_reward": mean_reward,
            "success_rate": float(np.mean(done_succ)) if done_succ else float("nan"),
            "mean_Nc": float(np.mean(nc_succ)) if nc_succ else float("nan"),
            "x_g": self.vec.goal_x if self.curriculum else float(self.vec.goal[0, 0]),
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "kl": stats["kl"],
        }

    def run(self, max_updates: Optional[int] = None, callback: Optional[Callable[[dict], None]] = None) -> TrainResult:
        path = self.out_dir / METRICS_NAME
        self._prepare_metrics(path)
        rows = []
        stop = self.n_updates if max_updates is None else min(self.n_updates, self.update + max_updates)
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            while self.update < stop:
                row = self.step_update()
                writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
                fh.flush()
                rows.append(row)
                if callback:
                    callback(row)
                if self.update % self.settings.checkpoint_every == 0 or self.update == stop:
                    self.save()
        return TrainResult(self.out_dir, self.update, self.env_steps, rows, [r["x_g"] for r in rows])

    def _prepare_metrics(self, path: Path):
        if self.update == 0 or not path.exists():
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(METRIC_COLUMNS)
            return
        # drop rows written after the snapshot we resumed from
        with open(path, newline="") as fh:
            lines = list(csv.reader(fh))
        keep = [lines[0]] + [r for r in lines[1:] if r and int(r[0]) <= self.update]
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(keep)

    # ------------------------------------------------------------------ persistence
    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.mode, self.spec, self.params, self.norm)

    def save(self):
        save_checkpoint(self.checkpoint(), self.out_dir / CHECKPOINT_NAME)
        st = {f"param{k}": b for k, b in enumerate(self.params.blocks())}
        st.update({f"adam_{k}": v for k, v in self.opt.state().items()})
        st.update({f"norm_{k}": v for k, v in self.norm.state().items()})
        st.update({f"vec_{k}": v for k, v in self.vec.state_dict().items()})
        st["rng"] = np.array(json.dumps(self.rng.bit_generator.state))
        st["window"] = np.array(list(self.window), dtype=np.int64)
        st["counters"] = np.array([self.update, self.env_steps], dtype=np.int64)
        st["cur_obs"] = self.obs
        st["mode"] = np.array(self.mode.value)
        tmp = self.out_dir / (STATE_NAME + ".tmp.npz")
        np.savez(tmp, **st)
        tmp.replace(self.out_dir / STATE_NAME)

    def load(self, path=None):
        path = Path(path) if path else self.out_dir / STATE_NAME
        with np.load(path, allow_pickle=False) as z:
            if str(z["mode"]) != self.mode.value:
                raise ValueError(f"trainer state was written in {z['mode']} mode, not {self.mode.value}")
            blocks = [z[f"param{k}"] for k in range(len(self.params.blocks()))]
            for cur, val in zip(self.params.blocks(), blocks):
                if cur.shape != val.shape:
                    raise ValueError("trainer state does not match the policy architecture")
                cur[...] = val
            self.opt.load_state({k[5:]: z[k] for k in z.files if k.startswith("adam_")})
            self.norm = RunningNormalizer.from_state({k[5:]: z[k] for k in z.files if k.startswith("norm_")})
            self.vec.load_state_dict({k[4:]: z[k] for k in z.files if k.startswith("vec_")})
            self.rng.bit_generator.state = json.loads(str(z["rng"]))
            self.window = deque(z["window"].tolist(), maxlen=self.settings.curriculum_window)
            self.update, self.env_steps = (int(v) for v in z["counters"])
            self.obs = z["cur_obs"].copy()

    def _dump_divergence(self, exc: TrainingDiverged):
        diag = {"update": self.update, "env_steps": self.env_steps, "error": str(exc),
                "diagnostics": exc.diagnostics,
                "param_norms": [float(np.linalg.norm(b)) for b in self.params.blocks()],
                "log_std": self.params.log_std.tolist()}
        (self.out_dir / "divergence.json").write_text(json.dumps(diag, indent=2, default=float))

    def close(self):
        self.vec.close()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def train(mode, specs: Sequence[EnvSpec], out_dir, seed: int = 0, resume: bool = False, **kwargs) -> TrainResult:
    trainer = Trainer(mode, specs, out_dir, seed=seed, **kwargs)
    try:
        if resume and (Path(out_dir) / STATE_NAME).exists():
            trainer.load()
        return trainer.run()
    finally:
        trainer.close()

"""Run configuration: one JSON document holding every knob of a run.

Validation goes through pydantic over the plain config dataclasses, so unknown
keys, wrong types and out-of-range values are all reported in one pass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

from pydantic import ConfigDict, TypeAdapter, ValidationError

from .control import Mode, RewardConfig
from .learn.ppo import PpoConfig
from .learn.train import TrainSettings, corridor_specs
from .planner import CandidateGrid
from .robot import RobotParams
from .sim.config import RandomizationConfig, SimConfig
from .world import Difficulty, EnvSpec, generate_env

DIFFICULTIES = ("easy", "medium", "hard")
# each difficulty draws its environment seeds from its own block
SEED_BLOCK = 100_000
EVAL_TRIALS = 10


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid run config:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


@dataclass(frozen=True)
class EnvMix:
    easy: int = 1000
    medium: int = 1500
    hard: int = 1500

    def __post_init__(self):
        if min(self.easy, self.medium, self.hard) < 0:
            raise ValueError("environment counts must be >= 0")

    def counts(self) -> dict:
        return {"easy": self.easy, "medium": self.medium, "hard": self.hard}

    def scaled(self, factor: float) -> "EnvMix":
        return EnvMix(*(scale_count(c, factor) for c in (self.easy, self.medium, self.hard)))


@dataclass(frozen=True)
class EvalSettings:
    envs_per_difficulty: int = 100
    trials: int = EVAL_TRIALS
    env_seed: int = 1_000_000
    stochastic: bool = False
    difficulties: tuple[Literal["easy", "medium", "hard"], ...] = DIFFICULTIES

    def __post_init__(self):
        if self.envs_per_difficulty < 1 or self.trials < 1:
            raise ValueError("envs_per_difficulty and trials must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    mode: Literal["end_to_end", "hierarchical", "param_skills"] = "hierarchical"
    task: Literal["pyramids", "corridor"] = "pyramids"
    envs: EnvMix = EnvMix()
    scale: float = 1.0
    env_seed: int = 0
    seed: int = 0
    workers: Optional[int] = None
    out_dir: str = "runs/default"
    corridor_goal: float = 1.0
    sim: SimConfig = SimConfig()
    reward: RewardConfig = RewardConfig()
    grid: CandidateGrid = CandidateGrid()
    ppo: PpoConfig = PpoConfig()
    robot: RobotParams = RobotParams()
    train: TrainSettings = TrainSettings()
    eval: EvalSettings = EvalSettings()

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.corridor_goal > 0:
            raise ValueError("corridor_goal must be > 0")

    @property
    def mode_enum(self) -> Mode:
        return Mode.parse(self.mode)

    def env_counts(self) -> dict:
        return self.envs.scaled(self.scale).counts()

    def training_specs(self) -> list[EnvSpec]:
        counts = self.env_counts()
        if self.task == "corridor":
            return corridor_specs(sum(counts.values()), self.corridor_goal)
        return [spec for d in DIFFICULTIES for spec in env_set(d, counts[d], self.env_seed)]

    def to_dict(self) -> dict:
        return _ADAPTER.dump_python(self, mode="json")


_STRICT = ConfigDict(extra="forbid")
for _cls in (RandomizationConfig, SimConfig, RewardConfig, CandidateGrid, PpoConfig, RobotParams,
             TrainSettings, EnvMix, EvalSettings, RunConfig):
    _cls.__pydantic_config__ = _STRICT
_ADAPTER = TypeAdapter(RunConfig)


def scale_count(count: int, factor: float) -> int:
    """Round half up, so 1500 x 0.1 gives 150 and 1000 x 0.064 gives 64."""
    return int(math.floor(count * factor + 0.5))


def env_seed_for(difficulty, index: int, base: int = 0) -> int:
    d = Difficulty.parse(difficulty)
    return int(base) + DIFFICULTIES.index(d.value) * SEED_BLOCK + int(index)


def env_set(difficulty, count: int, base: int = 0) -> list[EnvSpec]:
    if count > SEED_BLOCK:
        raise ValueError(f"at most {SEED_BLOCK} environments per difficulty")
    return [generate_env(env_seed_for(difficulty, k, base), difficulty) for k in range(count)]


def _format_error(err: dict) -> str:
    loc = ".".join(str(p) for p in err["loc"]) or "<root>"
    if err["type"] in ("unexpected_keyword_argument", "extra_forbidden"):
        return f"{loc}: unknown key"
    msg = err["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{loc}: {msg}"


def _semantic_problems(cfg: RunConfig) -> list[str]:
    errs = [f"grid: {p}" for p in cfg.grid.problems(cfg.robot)]
    errs += [f"train: {p}" for p in cfg.train.problems()]
    if sum(cfg.env_counts().values()) < 1:
        errs.append("envs: the scaled environment mix is empty")
    if any(c > SEED_BLOCK for c in cfg.env_counts().values()):
        errs.append(f"envs: at most {SEED_BLOCK} environments per difficulty")
    return errs


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping; raises ConfigError listing every problem found."""
    if not isinstance(data, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    try:
        cfg = _ADAPTER.validate_python(data)
    except ValidationError as exc:
        raise ConfigError([_format_error(e) for e in exc.errors()]) from None
    errs = _semantic_problems(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    return parse_config(data)


def merge_overrides(data: dict, overrides: dict) -> dict:
    """Deep-merge ``overrides`` into a copy of ``data``; None values are skipped."""
    out = dict(data)
    for key, val in overrides.items():
        if val is None:
            continue
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_overrides(out[key], val)
        else:
            out[key] = val
    return out


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

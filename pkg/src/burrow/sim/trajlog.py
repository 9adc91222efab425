"""Trajectory logs: JSON lines that are enough to re-simulate every logged episode.

Each episode starts with a header record carrying the environment, the reset
seed and every config that shapes the dynamics. One step record follows per
control step::

    {"kind": "step", "env_id", "episode", "t", "base_pose", "q", "action",
     "reward", "reward_terms", "N_c", "status"}

Floats go through ``json`` which writes the shortest round-tripping repr, so a
replay can demand exact equality.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from pydantic import TypeAdapter

from ..control import Mode, RewardConfig
from ..planner import CandidateGrid
from ..robot import RobotParams
from ..world import env_from_dict, env_to_dict
from .config import RUNNING, STATUS_NAMES, SimConfig
from .env import EnvInstance, VecEnv

LOG_VERSION = 1
POSE_COLUMNS = ("env_id", "episode", "t", "x", "y", "z", "roll", "pitch", "yaw")


class TrajectoryLogError(ValueError):
    pass


class TrajectoryLogger:
    """Streams episodes of a VecEnv to a JSONL file.

    Call ``begin()`` right after a reset and ``record()`` after every step with
    the mask of rows that were running when the step was issued.
    """

    def __init__(self, path, vec: VecEnv, env_ids: Optional[Iterable[int]] = None):
        self.vec = vec
        self.path = Path(path)
        self.fh = self.path.open("w")
        self.keep = np.zeros(vec.n, dtype=bool)
        self.keep[list(range(vec.n)) if env_ids is None else list(env_ids)] = True
        self.episode = np.full(vec.n, -1, dtype=np.int64)
        self.t = np.zeros(vec.n, dtype=np.int64)
        self._configs = {"sim": asdict(vec.sim), "reward": asdict(vec.reward_cfg), "robot": asdict(vec.robot),
                         "grid": asdict(vec.grid)}

    def _write(self, rec: dict):
        self.fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def begin(self, ids=None):
        ids = range(self.vec.n) if ids is None else ids
        for e in ids:
            e = int(e)
            if not self.keep[e]:
                continue
            self.episode[e] += 1
            self.t[e] = 0
            self._write({"kind": "episode", "version": LOG_VERSION, "env_id": e, "episode": int(self.episode[e]),
                         "mode": self.vec.mode.value, "reset_seed": int(self.vec.reset_seed[e]),
                         "goal_x": self.vec.goal_x, "explore_weight": self.vec.explore_weight,
                         "env": env_to_dict(self.vec.specs[e]), **self._configs})

    def record(self, batch, actions, running):
        actions = np.asarray(actions, dtype=float)
        for e in np.nonzero(np.asarray(running) & self.keep)[0]:
            status = int(batch.status[e]) if batch.done[e] else RUNNING
            self._write({"kind": "step", "env_id": int(e), "episode": int(self.episode[e]), "t": int(self.t[e]),
                         "base_pose": batch.base_pose[e].tolist(), "q": batch.q[e].tolist(),
                         "action": actions[e].tolist(), "reward": float(batch.reward[e]),
                         "reward_terms": {k: float(v[e]) for k, v in batch.terms.items()},
                         "N_c": int(batch.n_c[e]), "status": STATUS_NAMES[status]})
            self.t[e] += 1
        if self.vec.auto_reset and batch.done.any():
            self.begin(np.nonzero(batch.done)[0])

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Episode:
    header: dict
    steps: list = field(default_factory=list)

    @property
    def key(self):
        return self.header["env_id"], self.header["episode"]

    @property
    def status(self) -> str:
        return self.steps[-1]["status"] if self.steps else "running"

    @property
    def n_c_total(self) -> int:
        return sum(s["N_c"] for s in self.steps)


def read_log(path) -> list[Episode]:
    episodes = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryLogError(f"line {lineno}: not JSON ({exc})") from None
            kind = rec.get("kind")
            if kind == "episode":
                if rec.get("version") != LOG_VERSION:
                    raise TrajectoryLogError(f"line {lineno}: log version {rec.get('version')} "
                                             f"is not supported (expected {LOG_VERSION})")
                ep = Episode(rec)
                episodes[ep.key] = ep
            elif kind == "step":
                key = (rec.get("env_id"), rec.get("episode"))
                if key not in episodes:
                    raise TrajectoryLogError(f"line {lineno}: step for an episode without a header")
                episodes[key].steps.append(rec)
            else:
                raise TrajectoryLogError(f"line {lineno}: unknown record kind {kind!r}")
    return list(episodes.values())


def _load(cls, data):
    return TypeAdapter(cls).validate_python(data)


def instance_for(header: dict) -> EnvInstance:
    """Rebuild a single environment exactly as it was when the episode began."""
    inst = EnvInstance(env_from_dict(header["env"]), Mode.parse(header["mode"]), _load(SimConfig, header["sim"]),
                       _load(RewardConfig, header["reward"]), _load(RobotParams, header["robot"]),
                       _load(CandidateGrid, header["grid"]), goal_x=header["goal_x"])
    inst.vec.explore_weight = header["explore_weight"]
    inst.reset(header["reset_seed"])
    return inst


@dataclass
class Divergence:
    env_id: int
    episode: int
    t: int
    field: str
    logged: object
    replayed: object

    def describe(self) -> str:
        return (f"env {self.env_id} episode {self.episode}: {self.field} diverges at step {self.t} "
                f"(logged {self.logged}, replayed {self.replayed})")


def _compare(rec: dict, res, inst: EnvInstance):
    replayed = {
        "base_pose": res.info["base_pose"].tolist(),
        "q": inst.vec.q[0].tolist(),
        "reward": res.reward,
        "reward_terms": res.breakdown,
        "N_c": res.info["n_c"],
        "status": res.info["status"],
    }
    for key, val in replayed.items():
        if rec[key] != val:
            return key, rec[key], val
    return None


def replay_episode(ep: Episode) -> Optional[Divergence]:
    inst = instance_for(ep.header)
    for rec in ep.steps:
        if inst.status != RUNNING:
            return Divergence(*ep.key, rec["t"], "status", rec["status"], "episode already finished")
        res = inst.step(np.asarray(rec["action"], dtype=float))
        bad = _compare(rec, res, inst)
        if bad is not None:
            return Divergence(*ep.key, rec["t"], *bad)
    return None


@dataclass
class ReplayReport:
    episodes: int
    steps: int
    divergences: list

    @property
    def ok(self) -> bool:
        return not self.divergences


def replay_log(path) -> ReplayReport:
    eps = read_log(path)
    divs = [d for d in (replay_episode(ep) for ep in eps) if d is not None]
    return ReplayReport(len(eps), sum(len(ep.steps) for ep in eps), divs)


def export_poses(episodes: list[Episode], out_csv) -> int:
    """One row per logged control step; returns the row count."""
    rows = 0
    with Path(out_csv).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_COLUMNS)
        for ep in episodes:
            for rec in ep.steps:
                w.writerow([rec["env_id"], rec["episode"], rec["t"], *(repr(v) for v in rec["base_pose"])])
                rows += 1
    return rows

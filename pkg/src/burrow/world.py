"""Procedural confined environments built from floor and ceiling pyramid grids."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import CEILING_Z, Pose6, Pyramid

FILE_VERSION = 1

N_ROWS = 3
AREA_X = 2.5
AREA_Y = 1.5
JITTER = 0.3
BASE_RANGE = (0.2, 0.4)
TIP_RANGE = (0.15, 0.35)
START_XY = (-1.75, 0.0)
GOAL_XY = (1.75, 0.0)
STAND_HEIGHT = 0.28

# parameter-index slots for the counter-based draws
_K_JX, _K_JY, _K_L, _K_W, _K_H = range(5)


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @property
    def n_c(self) -> int:
        return {"easy": 2, "medium": 3, "hard": 4}[self.value]

    @property
    def n_r(self) -> int:
        return N_ROWS

    @property
    def label(self) -> str:
        return self.value

    @classmethod
    def parse(cls, value: Union[str, "Difficulty"]) -> "Difficulty":
        if isinstance(value, Difficulty):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown difficulty {value!r}; expected easy, medium or hard") from None


class EnvFileError(ValueError):
    """Malformed environment file; the message names the offending key."""


class EnvVersionError(EnvFileError):
    """Environment file written by an incompatible format version."""


@dataclass(frozen=True)
class EnvSpec:
    seed: int
    difficulty: Difficulty
    floor_pyramids: tuple  # n_r x n_c nested tuples of Pyramid
    ceiling_pyramids: tuple
    start: Pose6 = field(default_factory=lambda: Pose6(START_XY[0], START_XY[1], STAND_HEIGHT))
    goal_xy: tuple = GOAL_XY

    def pyramids(self) -> list[Pyramid]:
        """Flat list, floor first then ceiling, row-major."""
        out = [p for row in self.floor_pyramids for p in row]
        out += [p for row in self.ceiling_pyramids for p in row]
        return out

    def indexed_pyramids(self):
        for u, grid in enumerate((self.floor_pyramids, self.ceiling_pyramids)):
            for i, row in enumerate(grid):
                for j, p in enumerate(row):
                    yield u, i, j, p

    def pyramid_array(self) -> np.ndarray:
        return np.array([p.as_array() for p in self.pyramids()], dtype=float).reshape(-1, 6)


def grid_spacing(d: Difficulty) -> tuple[float, float, float, float]:
    """(dx, dy, x0, y0) of the pyramid grid centred on the origin."""
    dx = AREA_X / d.n_r
    dy = AREA_Y / d.n_c
    return dx, dy, -AREA_X / 2 + dx / 2, -AREA_Y / 2 + dy / 2


def _unit_draws(seed: int, u: int, i: int, j: int) -> np.ndarray:
    """Five U[0, 1) draws for cell (u, i, j), one per parameter-index slot.

    Philox keyed on the seed with counter words (slot, j, i, u): the low word
    carries the slot so draws never spill into a neighbouring cell and do not
    depend on the grid size.
    """
    bg = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64),
                          counter=np.array([0, j, i, u], dtype=np.uint64))
    raw = bg.random_raw(5)
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _scale(r: float, lo: float, hi: float) -> float:
    return float(lo + (hi - lo) * r)


def generate_env(seed: int, difficulty: Union[str, Difficulty]) -> EnvSpec:
    d = Difficulty.parse(difficulty)
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    seed = int(seed)
    dx, dy, x0, y0 = grid_spacing(d)
    grids = []
    for u in (0, 1):
        rows = []
        for i in range(d.n_r):
            row = []
            for j in range(d.n_c):
                r = _unit_draws(seed, u, i, j)
                sign = 1.0 if u == 0 else -1.0
                row.append(Pyramid(
                    xp=dx * i + x0 + _scale(r[_K_JX], -JITTER, JITTER),
                    yp=dy * j + y0 + _scale(r[_K_JY], -JITTER, JITTER),
                    zp=CEILING_Z * u,
                    lp=_scale(r[_K_L], *BASE_RANGE),
                    wp=_scale(r[_K_W], *BASE_RANGE),
                    hp=sign * _scale(r[_K_H], *TIP_RANGE),
                ))
            rows.append(tuple(row))
        grids.append(tuple(rows))
    return EnvSpec(seed=seed, difficulty=d, floor_pyramids=grids[0], ceiling_pyramids=grids[1])


def validate_env(e: EnvSpec) -> list[str]:
    """Every invariant violation as a human-readable string; empty when valid."""
    errs = []
    d = e.difficulty
    dx, dy, x0, y0 = grid_spacing(d)
    for name, grid in (("floor_pyramids", e.floor_pyramids), ("ceiling_pyramids", e.ceiling_pyramids)):
        if len(grid) != d.n_r or any(len(r) != d.n_c for r in grid):
            errs.append(f"{name}: shape must be {d.n_r}x{d.n_c} for {d.label}")
    tol = 1e-12
    for u, i, j, p in e.indexed_pyramids():
        tag = f"pyramid[u={u},i={i},j={j}]"
        cx, cy = dx * i + x0, dy * j + y0
        if abs(p.xp - cx) > JITTER + tol:
            errs.append(f"{tag}.xp={p.xp:.6g} outside {cx:.6g} +/- {JITTER}")
        if abs(p.yp - cy) > JITTER + tol:
            errs.append(f"{tag}.yp={p.yp:.6g} outside {cy:.6g} +/- {JITTER}")
        if p.zp != CEILING_Z * u:
            errs.append(f"{tag}.zp={p.zp:.6g} must equal {CEILING_Z * u}")
        for attr in ("lp", "wp"):
            v = getattr(p, attr)
            if not BASE_RANGE[0] - tol <= v <= BASE_RANGE[1] + tol:
                errs.append(f"{tag}.{attr}={v:.6g} outside [{BASE_RANGE[0]}, {BASE_RANGE[1]}]")
        if not TIP_RANGE[0] - tol <= abs(p.hp) <= TIP_RANGE[1] + tol:
            errs.append(f"{tag}.|hp|={abs(p.hp):.6g} outside [{TIP_RANGE[0]}, {TIP_RANGE[1]}]")
        if u == 0 and p.hp <= 0:
            errs.append(f"{tag}.hp={p.hp:.6g} must be positive on the floor")
        if u == 1 and p.hp >= 0:
            errs.append(f"{tag}.hp={p.hp:.6g} must be negative on the ceiling")
    if (e.start.x, e.start.y) != START_XY:
        errs.append(f"start=({e.start.x}, {e.start.y}) must be {START_XY}")
    if tuple(e.goal_xy) != GOAL_XY:
        errs.append(f"goal={tuple(e.goal_xy)} must be {GOAL_XY}")
    return errs


def env_to_dict(e: EnvSpec) -> dict:
    return {
        "version": FILE_VERSION,
        "seed": e.seed,
        "difficulty": e.difficulty.label,
        "pyramids": [
            {"u": u, "i": i, "j": j, "xp": p.xp, "yp": p.yp, "zp": p.zp, "lp": p.lp, "wp": p.wp, "hp": p.hp}
            for u, i, j, p in e.indexed_pyramids()
        ],
        "start": {k: getattr(e.start, k) for k in ("x", "y", "h_z", "phi", "theta", "psi")},
        "goal": {"x": e.goal_xy[0], "y": e.goal_xy[1]},
    }


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise EnvFileError(f"missing key {key!r} in {where}")
    return obj[key]


def env_from_dict(data: dict) -> EnvSpec:
    version = _require(data, "version", "environment file")
    if version != FILE_VERSION:
        raise EnvVersionError(f"unsupported environment file version {version!r} (expected {FILE_VERSION})")
    seed = _require(data, "seed", "environment file")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise EnvFileError(f"key 'seed' must be a 64-bit unsigned integer, got {seed!r}")
    try:
        d = Difficulty.parse(_require(data, "difficulty", "environment file"))
    except ValueError as exc:
        raise EnvFileError(f"key 'difficulty': {exc}") from None
    items = _require(data, "pyramids", "environment file")
    expected = 2 * d.n_r * d.n_c
    if not isinstance(items, list) or len(items) != expected:
        n = len(items) if isinstance(items, list) else type(items).__name__
        raise EnvFileError(f"key 'pyramids': expected {expected} entries for {d.label}, got {n}")
    cells = {}
    for k, item in enumerate(items):
        where = f"pyramids[{k}]"
        vals = {key: _require(item, key, where) for key in ("u", "i", "j", "xp", "yp", "zp", "lp", "wp", "hp")}
        idx = (vals["u"], vals["i"], vals["j"])
        if not (vals["u"] in (0, 1) and 0 <= vals["i"] < d.n_r and 0 <= vals["j"] < d.n_c):
            raise EnvFileError(f"key '{where}': index {idx} out of range")
        if idx in cells:
            raise EnvFileError(f"key '{where}': duplicate index {idx}")
        try:
            cells[idx] = Pyramid(*(float(vals[key]) for key in ("xp", "yp", "zp", "lp", "wp", "hp")))
        except (TypeError, ValueError) as exc:
            raise EnvFileError(f"key '{where}': {exc}") from None
    grids = tuple(
        tuple(tuple(cells[(u, i, j)] for j in range(d.n_c)) for i in range(d.n_r)) for u in (0, 1)
    )
    s = _require(data, "start", "environment file")
    g = _require(data, "goal", "environment file")
    start = Pose6(*(float(_require(s, key, "start")) for key in ("x", "y", "h_z", "phi", "theta", "psi")))
    goal = (float(_require(g, "x", "goal")), float(_require(g, "y", "goal")))
    return EnvSpec(seed=seed, difficulty=d, floor_pyramids=grids[0], ceiling_pyramids=grids[1],
                   start=start, goal_xy=goal)


def save_env(e: EnvSpec, path) -> None:
    Path(path).write_text(json.dumps(env_to_dict(e), indent=1) + "\n")


def load_env(path) -> EnvSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise EnvFileError(f"{path}: not valid JSON ({exc})") from None
    return env_from_dict(data)


def expected_pyramid_count(d: Union[str, Difficulty]) -> int:
    d = Difficulty.parse(d)
    return 2 * d.n_r * d.n_c


def start_goal_clearance(e: EnvSpec) -> float:
    """Smallest planar distance from start or goal to any pyramid base rectangle."""
    best = math.inf
    for p in e.pyramids():
        for px, py in (START_XY, tuple(e.goal_xy)):
            ddx = max(abs(px - p.xp) - p.lp / 2, 0.0)
            ddy = max(abs(py - p.yp) - p.wp / 2, 0.0)
            best = min(best, math.hypot(ddx, ddy))
    return best

"""Observations, commands and reward terms for the three locomotion modes.

Reward functions are elementwise: they accept scalars or equally-shaped
numpy arrays so the batched simulator and unit tests share one code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from numba import njit

from .geometry import CEILING_Z, wrap_angle
from .geometry.kernels import HOT, JIT

REWARD_TERMS = ("goal", "stall", "explore", "accel", "torque", "collision", "action_rate",
                "vxy", "wz", "pose_h", "pose_theta", "pose_psi")

SCAN_ROWS = 10
SCAN_COLS = 11
SCAN_X = 0.1 + 0.1 * np.arange(SCAN_ROWS)          # forward 0.1 .. 1.0 m
SCAN_Y = -0.5 + 0.1 * np.arange(SCAN_COLS)         # lateral -0.5 .. 0.5 m
HEIGHT_DIM = 2 * SCAN_ROWS * SCAN_COLS
QD_SCALE = 0.05

SKILL_SPEED = 0.5
SKILL_YAW_RATE = 1.57
SKILL_YAW_DEADBAND = 0.05


class Mode(Enum):
    END_TO_END = "end_to_end"
    HIERARCHICAL = "hierarchical"
    PARAM_SKILLS = "param_skills"

    @property
    def command_dim(self) -> int:
        return 6 if self is Mode.PARAM_SKILLS else 2

    @property
    def obs_dim(self) -> int:
        return 3 + 12 + 12 + HEIGHT_DIM + self.command_dim

    @property
    def tag(self) -> int:
        return {"end_to_end": 0, "hierarchical": 1, "param_skills": 2}[self.value]

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"e2e": "end_to_end", "endtoend": "end_to_end", "paramskills": "param_skills",
                   "skills": "param_skills"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown mode {value!r}") from None

    @classmethod
    def from_tag(cls, tag: int) -> "Mode":
        order = [cls.END_TO_END, cls.HIERARCHICAL, cls.PARAM_SKILLS]
        if not 0 <= tag < len(order):
            raise ValueError(f"unknown mode tag {tag}")
        return order[tag]


# observation index layout
OBS_GRAVITY = slice(0, 3)
OBS_Q = slice(3, 15)
OBS_QD = slice(15, 27)
OBS_HEIGHT = slice(27, 27 + HEIGHT_DIM)
OBS_COMMAND = slice(27 + HEIGHT_DIM, None)


@dataclass(frozen=True)
class RewardConfig:
    goal_threshold: float = 0.2
    stall_speed: float = 0.1
    c_accel: float = 2.5e-7
    c_torque: float = 2e-4
    c_collision: float = 0.1
    c_action_rate: float = 0.01
    sigma_vxy: float = 0.25
    sigma_wz: float = 0.25
    w_h: float = 1.0
    w_theta: float = 0.5
    w_psi: float = 0.5
    w_goal: float = 1.0
    w_stall: float = 1.0
    w_explore: float = 0.05
    explore_decay_fraction: float = 0.25

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        if not self.sigma_vxy > 0 or not self.sigma_wz > 0:
            errs.append("tracking sigmas must be > 0")
        if not self.goal_threshold > 0:
            errs.append("goal_threshold must be > 0")
        for name in ("c_accel", "c_torque", "c_collision", "c_action_rate", "w_h", "w_theta", "w_psi",
                     "w_goal", "w_stall", "w_explore"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        return errs

    def explore_weight(self, progress: float) -> float:
        """Exploration weight decayed linearly to 0 over the first part of training."""
        if self.explore_decay_fraction <= 0:
            return self.w_explore
        return self.w_explore * max(0.0, 1.0 - progress / self.explore_decay_fraction)


# height field ----------------------------------------------------------------

@njit(**HOT)
def heightfield_kernel(lo, hi, pos, yaw, pyr, npyr, scan_x, scan_y, out):
    """Floor/ceiling clearances at the yaw-aligned scandot grid, envs [lo, hi)."""
    nr = scan_x.shape[0]
    nc = scan_y.shape[0]
    nd = nr * nc
    # scan points sit within this radius of the base
    reach = 0.0
    for r in range(nr):
        for k in range(nc):
            reach = max(reach, math.hypot(scan_x[r], scan_y[k]))
    for e in range(lo, hi):
        c = math.cos(yaw[e])
        s = math.sin(yaw[e])
        bx = pos[e, 0]
        by = pos[e, 1]
        bz = pos[e, 2]
        # out holds running floor / ceiling heights until the final clearance pass
        for idx in range(nd):
            out[e, idx] = 0.0
            out[e, nd + idx] = 0.5
        for m in range(npyr[e]):
            px = pyr[e, m, 0]
            py = pyr[e, m, 1]
            hx = 0.5 * pyr[e, m, 3]
            hy = 0.5 * pyr[e, m, 4]
            if abs(px - bx) > reach + hx or abs(py - by) > reach + hy:
                continue
            ix = 1.0 / hx
            iy = 1.0 / hy
            zp = pyr[e, m, 2]
            hp = pyr[e, m, 5]
            for r in range(nr):
                for k in range(nc):
                    x = bx + c * scan_x[r] - s * scan_y[k]
                    y = by + s * scan_x[r] + c * scan_y[k]
                    u = abs(x - px) * ix
                    v = abs(y - py) * iy
                    if u > 1.0 or v > 1.0:
                        continue
                    z = zp + hp * (1.0 - max(u, v))
                    idx = r * nc + k
                    if hp > 0.0:
                        if z > out[e, idx]:
                            out[e, idx] = z
                    elif z < out[e, nd + idx]:
                        out[e, nd + idx] = z
        for idx in range(nd):
            out[e, idx] = min(max(bz - out[e, idx], 0.0), 1.0)
            out[e, nd + idx] = min(max(out[e, nd + idx] - bz, 0.0), 1.0)


def sense_heightfield(env, robot) -> np.ndarray:
    """220 clipped clearances: floor matrix then ceiling matrix, row-major.

    ``env`` is an EnvSpec (or anything with ``pyramid_array()``), ``robot`` a
    RobotState. The grid is rotated by base yaw only.
    """
    pyr = np.ascontiguousarray(env.pyramid_array()[None])
    pos = np.array([[robot.base.x, robot.base.y, robot.base.h_z]])
    out = np.empty((1, HEIGHT_DIM))
    heightfield_kernel(0, 1, pos, np.array([robot.base.psi]), pyr, np.array([pyr.shape[1]]),
                       SCAN_X, SCAN_Y, out)
    return out[0]


def scandot_points(x: float, y: float, yaw: float) -> np.ndarray:
    """World xy of every scandot, (110, 2) row-major."""
    gx, gy = np.meshgrid(SCAN_X, SCAN_Y, indexing="ij")
    c, s = math.cos(yaw), math.sin(yaw)
    return np.column_stack([x + c * gx.ravel() - s * gy.ravel(), y + s * gx.ravel() + c * gy.ravel()])


# commands and observation ------------------------------------------------------

def relative_goal(x, y, yaw, goal_x, goal_y):
    """Goal position in the yaw-aligned body frame."""
    dx = np.asarray(goal_x) - x
    dy = np.asarray(goal_y) - y
    c = np.cos(yaw)
    s = np.sin(yaw)
    return c * dx + s * dy, -s * dx + c * dy


def skill_command_from_local_goal(x_l, y_l, h_zl, theta_l, psi_l, yaw, previous=None):
    """Motor-skill parameters steering toward a body-frame local goal.

    Returns ``(vx, vy, wz, h, theta, psi)``; a zero-length goal keeps
    ``previous`` (or zeros when there is none).
    """
    n = math.hypot(x_l, y_l)
    if n < 1e-9:
        return tuple(previous) if previous is not None else (0.0,) * 6
    dyaw = wrap_angle(psi_l - yaw)
    wz = 0.0 if abs(dyaw) <= SKILL_YAW_DEADBAND else math.copysign(SKILL_YAW_RATE, dyaw)
    return (SKILL_SPEED * x_l / n, SKILL_SPEED * y_l / n, wz, h_zl, theta_l, psi_l)


def skill_command_batch(x_l, y_l, h_zl, theta_l, psi_l, yaw, previous):
    n = np.hypot(x_l, y_l)
    ok = n >= 1e-9
    safe = np.where(ok, n, 1.0)
    dyaw = wrap_angle(psi_l - yaw)
    wz = np.where(np.abs(dyaw) <= SKILL_YAW_DEADBAND, 0.0, np.copysign(SKILL_YAW_RATE, dyaw))
    cmd = np.stack([SKILL_SPEED * x_l / safe, SKILL_SPEED * y_l / safe, wz, h_zl, theta_l, psi_l], axis=-1)
    return np.where(ok[:, None], cmd, previous)


def assemble_observation(mode, gravity, q, qd, height, command) -> np.ndarray:
    """Concatenate (g, q, 0.05 * qd, h, c); works on single or batched inputs."""
    mode = Mode.parse(mode)
    command = np.asarray(command, dtype=float)
    if command.shape[-1] != mode.command_dim:
        raise ValueError(f"{mode.value} expects a {mode.command_dim}-d command, got {command.shape[-1]}")
    height = np.asarray(height, dtype=float)
    if height.shape[-1] != HEIGHT_DIM:
        raise ValueError(f"height field must have {HEIGHT_DIM} entries")
    parts = [np.asarray(gravity, float), np.asarray(q, float), QD_SCALE * np.asarray(qd, float),
             np.clip(height, 0.0, 1.0), command]
    return np.concatenate(parts, axis=-1)


# rewards ---------------------------------------------------------------------

def reward_goal(x_r, y_r, d_g):
    return np.where(np.hypot(x_r, y_r) < d_g, 1.0, 0.0)


def reward_stall(v_x, v_y, threshold=0.1):
    return np.where(np.hypot(v_x, v_y) < threshold, -1.0, 0.0)


def reward_explore(v_x, v_y, x_r, y_r):
    nv = np.hypot(v_x, v_y)
    ng = np.hypot(x_r, y_r)
    ok = (nv >= 1e-6) & (ng >= 1e-6)
    denom = np.where(ok, nv * ng, 1.0)
    cos = np.clip((np.asarray(v_x) * x_r + np.asarray(v_y) * y_r) / denom, -1.0, 1.0)
    return np.where(ok, cos, 0.0)


def penalty_terms(qdd, tau, n_c, a, a_prev, cfg: RewardConfig) -> dict:
    qdd = np.asarray(qdd, float)
    tau = np.asarray(tau, float)
    da = np.asarray(a, float) - np.asarray(a_prev, float)
    return {
        "accel": -cfg.c_accel * np.sum(qdd * qdd, axis=-1),
        "torque": -cfg.c_torque * np.sum(tau * tau, axis=-1),
        "collision": -cfg.c_collision * np.asarray(n_c, float),
        "action_rate": -cfg.c_action_rate * np.sum(da * da, axis=-1),
    }


def reward_penalty(qdd, tau, n_c, a, a_prev, cfg: RewardConfig):
    t = penalty_terms(qdd, tau, n_c, a, a_prev, cfg)
    return t["accel"] + t["torque"] + t["collision"] + t["action_rate"]


def reward_vel_tracking(v_x, v_y, w_z, cmd, sigma_vxy, sigma_wz):
    cmd = np.asarray(cmd, float)
    ex = np.asarray(v_x) - cmd[..., 0]
    ey = np.asarray(v_y) - cmd[..., 1]
    ew = np.asarray(w_z) - cmd[..., 2]
    return np.exp(-(ex * ex + ey * ey) / sigma_vxy), np.exp(-(ew * ew) / sigma_wz)


def pose_tracking_terms(h_z, theta, psi, cmd, cfg: RewardConfig) -> dict:
    cmd = np.asarray(cmd, float)
    return {
        "pose_h": -cfg.w_h * np.abs(np.asarray(h_z) - cmd[..., 3]),
        "pose_theta": -cfg.w_theta * np.abs(wrap_angle(np.asarray(theta) - cmd[..., 4])),
        "pose_psi": -cfg.w_psi * np.abs(wrap_angle(np.asarray(psi) - cmd[..., 5])),
    }


def reward_pose_tracking(h_z, theta, psi, cmd, cfg: RewardConfig):
    t = pose_tracking_terms(h_z, theta, psi, cmd, cfg)
    return t["pose_h"] + t["pose_theta"] + t["pose_psi"]


def total_reward(mode, s: Mapping, cfg: RewardConfig, explore_weight: Optional[float] = None):
    """Mode-specific reward sum and its named breakdown.

    ``s`` holds body-frame ``vx, vy, wz``, pose ``h_z, theta, psi``, global
    relative goal ``x_r, y_r``, penalty inputs ``qdd, tau, n_c, a, a_prev`` and,
    per mode, ``x_l, y_l`` (hierarchical) or ``cmd`` (skills).
    """
    mode = Mode.parse(mode)
    w_e = cfg.w_explore if explore_weight is None else explore_weight
    shape = np.shape(s["vx"])
    terms = {name: np.zeros(shape) for name in REWARD_TERMS}
    terms.update(penalty_terms(s["qdd"], s["tau"], s["n_c"], s["a"], s["a_prev"], cfg))
    if mode is Mode.PARAM_SKILLS:
        terms["vxy"], terms["wz"] = reward_vel_tracking(s["vx"], s["vy"], s["wz"], s["cmd"],
                                                        cfg.sigma_vxy, cfg.sigma_wz)
        terms.update(pose_tracking_terms(s["h_z"], s["theta"], s["psi"], s["cmd"], cfg))
    else:
        if mode is Mode.END_TO_END:
            tx, ty = s["x_r"], s["y_r"]
            goal = reward_goal(tx, ty, cfg.goal_threshold)
        else:
            tx, ty = s["x_l"], s["y_l"]
            goal = reward_goal(tx, ty, cfg.goal_threshold) + reward_goal(s["x_r"], s["y_r"], cfg.goal_threshold)
        terms["goal"] = cfg.w_goal * goal
        terms["stall"] = cfg.w_stall * reward_stall(s["vx"], s["vy"], cfg.stall_speed)
        terms["explore"] = w_e * reward_explore(s["vx"], s["vy"], tx, ty)
    total = sum(terms[name] for name in REWARD_TERMS)
    if not shape:
        return float(total), {k: float(v) for k, v in terms.items()}
    return total, terms

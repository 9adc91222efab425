"""Reduced-order quadruped: massless 3-DoF legs on a rigid torso.

Joint order is (FL, FR, RL, RR) x (hip abduction, hip flexion, knee). Hip
abduction rotates about the body x axis, flexion and knee about y. With all
joints at zero a leg hangs straight down.

Default geometry and gains approximate a small quadruped; they are
engineering defaults, overridable from the run config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .geometry import Capsule, Obb, Pose6, rotation_matrix
from .geometry.kernels import HOT, JIT

LEGS = ("FL", "FR", "RL", "RR")
JOINTS = ("abduction", "flexion", "knee")


def _default_hips():
    return ((0.19, 0.11, 0.0), (0.19, -0.11, 0.0), (-0.19, 0.11, 0.0), (-0.19, -0.11, 0.0))


def _default_limits():
    return ((-0.8, 0.8), (-1.5, 3.5), (-2.7, 0.0)) * 4


@dataclass(frozen=True)
class RobotParams:
    torso_half_extents: tuple[float, float, float] = (0.19, 0.095, 0.055)
    hip_offsets: tuple[tuple[float, float, float], ...] = field(default_factory=_default_hips)
    thigh_length: float = 0.213
    calf_length: float = 0.213
    torso_mass: float = 12.0
    torso_inertia: tuple[float, float, float] = (0.0482, 0.1565, 0.1805)
    joint_limits: tuple[tuple[float, float], ...] = field(default_factory=_default_limits)
    kp: float = 20.0
    kd: float = 0.5
    torque_limit: float = 33.5
    action_scale: float = 0.25
    q_stand: tuple[float, ...] = (0.0, 0.9, -1.8) * 4
    joint_inertia: float = 0.05
    joint_friction: float = 0.1
    limb_radius: float = 0.02
    foot_radius: float = 0.02

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        for name in ("thigh_length", "calf_length", "torso_mass", "kp", "kd", "torque_limit",
                     "action_scale", "joint_inertia", "limb_radius", "foot_radius"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be > 0")
        if self.joint_friction < 0:
            errs.append("joint_friction must be >= 0")
        if len(self.torso_half_extents) != 3 or min(self.torso_half_extents) <= 0:
            errs.append("torso_half_extents must be 3 positive values")
        if len(self.torso_inertia) != 3 or min(self.torso_inertia) <= 0:
            errs.append("torso_inertia must be 3 positive values")
        if np.shape(self.hip_offsets) != (4, 3):
            errs.append("hip_offsets must be 4 x 3")
        if np.shape(self.joint_limits) != (12, 2):
            errs.append("joint_limits must be 12 (lower, upper) pairs")
        elif any(lo >= hi for lo, hi in self.joint_limits):
            errs.append("joint limits need lower < upper")
        if len(self.q_stand) != 12:
            errs.append("q_stand must have 12 entries")
        return errs

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits], dtype=float)

    @property
    def hips(self) -> np.ndarray:
        return np.asarray(self.hip_offsets, dtype=float)

    @property
    def stand(self) -> np.ndarray:
        return np.asarray(self.q_stand, dtype=float)


@dataclass
class RobotState:
    """Floating-base pose/twist (world frame) plus joint state."""

    base: Pose6
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.zeros(12))
    qd: np.ndarray = field(default_factory=lambda: np.zeros(12))
    qdd: np.ndarray = field(default_factory=lambda: np.zeros(12))
    last_action: np.ndarray = field(default_factory=lambda: np.zeros(12))

    @property
    def rotation(self) -> np.ndarray:
        return self.base.rotation

    def body_lin_vel(self) -> np.ndarray:
        return self.rotation.T @ self.lin_vel

    def body_ang_vel(self) -> np.ndarray:
        return self.rotation.T @ self.ang_vel


class LegPoints(NamedTuple):
    hips: np.ndarray   # (4, 3)
    knees: np.ndarray
    feet: np.ndarray


class Proxies(NamedTuple):
    torso: Obb
    thighs: list
    calves: list
    feet: np.ndarray   # (4, 3) sphere centres
    foot_radius: float


# compiled kernels used by the simulator -----------------------------------

@njit(**HOT)
def leg_points_body(q, hips, l1, l2, hip_out, knee_out, foot_out):
    for leg in range(4):
        q0 = q[3 * leg]
        q1 = q[3 * leg + 1]
        q2 = q[3 * leg + 2]
        s0, c0 = math.sin(q0), math.cos(q0)
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        hx, hy, hz = hips[leg, 0], hips[leg, 1], hips[leg, 2]
        hip_out[leg, 0] = hx
        hip_out[leg, 1] = hy
        hip_out[leg, 2] = hz
        kx = -l1 * s1
        kz = -l1 * c1
        knee_out[leg, 0] = hx + kx
        knee_out[leg, 1] = hy - kz * s0
        knee_out[leg, 2] = hz + kz * c0
        fx = kx - l2 * s12
        fz = kz - l2 * c12
        foot_out[leg, 0] = hx + fx
        foot_out[leg, 1] = hy - fz * s0
        foot_out[leg, 2] = hz + fz * c0


@njit(**HOT)
def calf_capsule_end(knee, foot, trim, out):
    # calf proxy stops short of the foot so the foot sphere alone carries ground contact
    dx = foot[0] - knee[0]
    dy = foot[1] - knee[1]
    dz = foot[2] - knee[2]
    n = math.sqrt(dx * dx + dy * dy + dz * dz)
    f = max(n - trim, 0.0) / n if n > 0 else 0.0
    out[0] = knee[0] + f * dx
    out[1] = knee[1] + f * dy
    out[2] = knee[2] + f * dz


@njit(**JIT)
def pd_torque_kernel(q, qd, q_target, kp, kd, limit, out):
    for i in range(q.shape[0]):
        t = kp * (q_target[i] - q[i]) - kd * qd[i]
        out[i] = min(max(t, -limit), limit)


# public API ----------------------------------------------------------------

def gravity_in_body(state) -> np.ndarray:
    """World gravity direction (0, 0, -1) expressed in the body frame."""
    r = state.rotation if hasattr(state, "rotation") else rotation_matrix(*state)
    return r.T @ np.array([0.0, 0.0, -1.0])


def forward_kinematics(params: RobotParams, base: Pose6, q) -> LegPoints:
    q = np.asarray(q, dtype=float)
    hip = np.empty((4, 3))
    knee = np.empty((4, 3))
    foot = np.empty((4, 3))
    leg_points_body(q, params.hips, params.thigh_length, params.calf_length, hip, knee, foot)
    r = base.rotation
    p = base.position
    return LegPoints(hip @ r.T + p, knee @ r.T + p, foot @ r.T + p)


def collision_proxies(params: RobotParams, base: Pose6, q) -> Proxies:
    pts = forward_kinematics(params, base, q)
    r = params.limb_radius
    thighs = [Capsule(pts.hips[k], pts.knees[k], r) for k in range(4)]
    calves = []
    for k in range(4):
        end = np.empty(3)
        calf_capsule_end(pts.knees[k], pts.feet[k], 2.0 * r, end)
        calves.append(Capsule(pts.knees[k], end, r))
    torso = Obb(base.position, params.torso_half_extents, base.rotation)
    return Proxies(torso, thighs, calves, pts.feet, params.foot_radius)


def pd_torque(params: RobotParams, q, qd, q_target) -> np.ndarray:
    out = np.empty(12)
    pd_torque_kernel(np.asarray(q, float), np.asarray(qd, float), np.asarray(q_target, float),
                     params.kp, params.kd, params.torque_limit, out)
    return out


def action_to_target(params: RobotParams, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.clip(params.stand + params.action_scale * a, params.lower, params.upper)

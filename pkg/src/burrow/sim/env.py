"""Batched environment stepping with control decimation, planning and auto-reset.

``VecEnv`` stores every environment as one row of struct-of-arrays state and
advances rows independently, so results do not depend on how rows are split
across worker threads. ``EnvInstance`` is the single-environment view.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import control
from ..control import Mode, RewardConfig
from ..geometry import CEILING_Z, Pose6, wrap_angle
from ..geometry import kernels as gk
from ..planner import CandidateGrid, plan_batch_kernel
from ..robot import RobotParams, RobotState
from ..world import EnvSpec, GOAL_XY
from . import kernels as sk
from .config import (FAILED, FLIPPED, N_PROXIES, RUNNING, STATUS_NAMES, SUCCESS, TIMEOUT,
                     RandomizationConfig, SimConfig)

CURRICULUM_START = 0.6
CURRICULUM_STEP = 0.2
CURRICULUM_THRESHOLD = 0.40


class SimulationDiverged(RuntimeError):
    def __init__(self, env_ids):
        self.env_ids = list(env_ids)
        super().__init__(f"non-finite state after integration in envs {self.env_ids}")


def resolve_workers(workers: Optional[int] = None) -> int:
    env = os.environ.get("BURROW_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(workers or 1))


@dataclass(frozen=True)
class RandomizedParams:
    mass_scale: float = 1.0
    motor_strength: float = 1.0
    joint_offset: tuple = (0.0,) * 12
    friction: float = 0.8
    restitution: float = 0.0
    gravity: tuple = (0.0, 0.0, -9.81)

    @classmethod
    def nominal(cls, cfg: SimConfig) -> "RandomizedParams":
        return cls(friction=cfg.friction, restitution=cfg.restitution, gravity=(0.0, 0.0, -cfg.gravity))

    @classmethod
    def draw(cls, seed: int, cfg: SimConfig) -> "RandomizedParams":
        if not cfg.randomize:
            return cls.nominal(cfg)
        r: RandomizationConfig = cfg.randomization
        rng = np.random.default_rng(int(seed))
        mass = rng.uniform(*r.mass_scale)
        motor = rng.uniform(*r.motor_strength)
        offs = rng.uniform(-r.joint_offset, r.joint_offset, 12)
        mu = rng.uniform(*r.friction)
        rest = rng.uniform(*r.restitution)
        heading = rng.uniform(0.0, 2 * math.pi)
        tilt = math.radians(rng.uniform(0.0, r.gravity_tilt_deg))
        mag = rng.uniform(*r.gravity_magnitude)
        g = (mag * math.sin(tilt) * math.cos(heading), mag * math.sin(tilt) * math.sin(heading),
             -mag * math.cos(tilt))
        return cls(float(mass), float(motor), tuple(float(x) for x in offs), float(mu), float(rest),
                   tuple(float(x) for x in g))


@dataclass
class StepBatch:
    obs: np.ndarray
    reward: np.ndarray
    terms: dict
    done: np.ndarray
    status: np.ndarray          # terminal status for finished envs, else RUNNING
    n_c: np.ndarray
    base_pose: np.ndarray       # (N, 6) pose after the step, before any auto-reset
    q: np.ndarray
    time_out: np.ndarray
    terminal_obs: np.ndarray    # observation at the finished state (rows valid where done)
    episode_nc: np.ndarray      # cumulative collisions so far, captured before any auto-reset
    episode_len: np.ndarray     # control steps so far, captured before any auto-reset
    info: dict = field(default_factory=dict)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    breakdown: dict
    done: bool
    info: dict


def quat_from_euler(phi, theta, psi):
    cr, sr = np.cos(phi / 2), np.sin(phi / 2)
    cp, sp = np.cos(theta / 2), np.sin(theta / 2)
    cy, sy = np.cos(psi / 2), np.sin(psi / 2)
    return np.stack([cr * cp * cy + sr * sp * sy,
                     sr * cp * cy - cr * sp * sy,
                     cr * sp * cy + sr * cp * sy,
                     cr * cp * sy - sr * sp * cy], axis=-1)


def euler_from_quat(quat):
    """Intrinsic Z-Y-X angles (roll, pitch, yaw) from (w, x, y, z) quaternions."""
    w, x, y, z = (quat[..., k] for k in range(4))
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def rotations_from_quat(quat):
    w, x, y, z = (quat[:, k] for k in range(4))
    r = np.empty((len(quat), 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - z * w)
    r[:, 0, 2] = 2 * (x * z + y * w)
    r[:, 1, 0] = 2 * (x * y + z * w)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - x * w)
    r[:, 2, 0] = 2 * (x * z - y * w)
    r[:, 2, 1] = 2 * (y * z + x * w)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def curriculum_update(x_g: float, success_rate: float) -> float:
    """Advance the end-to-end goal by 0.2 m once success strictly exceeds 40 %."""
    if success_rate > CURRICULUM_THRESHOLD:
        return min(x_g + CURRICULUM_STEP, GOAL_XY[0])
    return x_g


def termination_status(dist_goal, step, horizon, gravity_z, goal_threshold, flip_threshold):
    status = np.full(np.shape(dist_goal), RUNNING, dtype=np.int64)
    status = np.where(gravity_z > flip_threshold, FLIPPED, status)
    status = np.where(np.asarray(step) >= horizon, TIMEOUT, status)
    status = np.where(dist_goal < goal_threshold, SUCCESS, status)
    return status


class VecEnv:
    def __init__(self, specs: Sequence[EnvSpec], mode=Mode.HIERARCHICAL, sim: SimConfig = SimConfig(),
                 reward: RewardConfig = RewardConfig(), robot: RobotParams = RobotParams(),
                 grid: CandidateGrid = CandidateGrid(), seed: int = 0, workers: Optional[int] = None,
                 auto_reset: bool = True, goal_x: Optional[float] = None):
        self.specs = list(specs)
        self.mode = Mode.parse(mode)
        self.sim = sim
        self.reward_cfg = reward
        self.robot = robot
        self.grid = grid
        self.workers = resolve_workers(workers)
        self.auto_reset = auto_reset
        self.n = n = len(self.specs)
        if n == 0:
            raise ValueError("need at least one environment")
        self.explore_weight = reward.w_explore
        # end-to-end training passes the curriculum goal; everything else uses the world goal
        self.goal_x = float(GOAL_XY[0] if goal_x is None else goal_x)
        self._seed_stream = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB0]))
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.timings = {"physics": 0.0, "sensing": 0.0, "planning": 0.0, "other": 0.0}

        # static geometry
        arrs = [s.pyramid_array() for s in self.specs]
        p = max(1, max(len(a) for a in arrs))
        self.pyr = np.zeros((n, p, 6))
        self.pyr[:, :, 3:5] = 1.0
        self.pyr[:, :, 5] = 1.0
        self.npyr = np.zeros(n, dtype=np.int64)
        self.planes = np.zeros((n, p, 5, 4))
        self.tris = np.zeros((n, p, 6, 3, 3))
        verts = np.empty((5, 3))
        for e, a in enumerate(arrs):
            self.npyr[e] = len(a)
            for k, row in enumerate(a):
                self.pyr[e, k] = row
                gk.pyramid_planes(row, self.planes[e, k])
                gk.pyramid_vertices(row, verts)
                for t in range(6):
                    gk.pyramid_triangle(row, t, verts, self.tris[e, k, t])

        rp = robot
        self.prm = np.zeros(sk.N_PARAMS)
        self.prm[sk.P_L1] = rp.thigh_length
        self.prm[sk.P_L2] = rp.calf_length
        self.prm[sk.P_LIMB_R] = rp.limb_radius
        self.prm[sk.P_FOOT_R] = rp.foot_radius
        self.prm[sk.P_TRIM] = 2.0 * rp.limb_radius
        self.prm[sk.P_KP] = rp.kp
        self.prm[sk.P_KD] = rp.kd
        self.prm[sk.P_TAU_LIM] = rp.torque_limit
        self.prm[sk.P_JI] = rp.joint_inertia
        self.prm[sk.P_JF] = rp.joint_friction
        self.prm[sk.P_K] = sim.contact_stiffness
        self.prm[sk.P_C] = sim.contact_damping
        self.prm[sk.P_CT] = sim.tangential_damping
        self.prm[sk.P_DT] = sim.dt
        self.prm[sk.P_CEIL] = CEILING_Z
        self.prm[sk.P_COLL] = sim.collision_depth
        self.prm[sk.P_HX:sk.P_HZ + 1] = rp.torso_half_extents
        self.hips = np.ascontiguousarray(rp.hips)
        self.lower = rp.lower
        self.upper = rp.upper
        self.he = np.asarray(rp.torso_half_extents, dtype=float)
        self.table = grid.local_table()

        # dynamic state
        self.pos = np.zeros((n, 3))
        self.quat = np.zeros((n, 4))
        self.vel = np.zeros((n, 3))
        self.omega = np.zeros((n, 3))
        self.q = np.zeros((n, 12))
        self.qd = np.zeros((n, 12))
        self.qdd = np.zeros((n, 12))
        self.tau = np.zeros((n, 12))
        self.q_target = np.zeros((n, 12))
        self.action = np.zeros((n, 12))
        self.prev_action = np.zeros((n, 12))
        self.mass = np.zeros(n)
        self.inertia = np.zeros((n, 3))
        self.motor = np.zeros(n)
        self.calib = np.zeros((n, 12))
        self.mu = np.zeros(n)
        self.restitution = np.zeros(n)
        self.gravity = np.zeros((n, 3))
        self.collided = np.zeros((n, N_PROXIES), dtype=np.uint8)
        self.failed = np.zeros(n, dtype=np.uint8)
        self.step_count = np.zeros(n, dtype=np.int64)
        self.n_c = np.zeros(n, dtype=np.int64)
        self.n_c_total = np.zeros(n, dtype=np.int64)
        self.status = np.full(n, RUNNING, dtype=np.int64)
        self.goal = np.zeros((n, 2))
        self.reset_seed = np.zeros(n, dtype=np.uint64)
        self.lg_pose = np.zeros((n, 6))
        self.lg_has = np.zeros(n, dtype=bool)
        self.since_plan = np.zeros(n, dtype=np.int64)
        self.command = np.zeros((n, self.mode.command_dim))
        self.height = np.zeros((n, control.HEIGHT_DIM))
        self.obs = np.zeros((n, self.mode.obs_dim))

    # ------------------------------------------------------------------ utils
    @property
    def obs_dim(self) -> int:
        return self.mode.obs_dim

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _ranges(self, n):
        w = min(self.workers, n)
        cuts = np.linspace(0, n, w + 1).astype(int)
        return [(int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]

    def _parallel(self, fn, n):
        ranges = self._ranges(n)
        if self._pool is None or len(ranges) == 1:
            for lo, hi in ranges:
                fn(lo, hi)
        else:
            list(self._pool.map(lambda r: fn(*r), ranges))

    def draw_seeds(self, count: int) -> np.ndarray:
        return self._seed_stream.integers(0, 2**63, size=count, dtype=np.uint64)

    def randomized_params(self, e: int) -> RandomizedParams:
        return RandomizedParams(float(self.mass[e] / self.robot.torso_mass), float(self.motor[e]),
                                tuple(self.calib[e].tolist()), float(self.mu[e]),
                                float(self.restitution[e]), tuple(self.gravity[e].tolist()))

    def euler(self):
        return euler_from_quat(self.quat)

    def base_pose(self) -> np.ndarray:
        roll, pitch, yaw = self.euler()
        return np.column_stack([self.pos, roll, pitch, yaw])

    def robot_state(self, e: int) -> RobotState:
        pose = self.base_pose()[e]
        return RobotState(Pose6(*pose), self.vel[e].copy(), self.omega[e].copy(), self.q[e].copy(),
                          self.qd[e].copy(), self.qdd[e].copy(), self.prev_action[e].copy())

    def gravity_body(self) -> np.ndarray:
        r = rotations_from_quat(self.quat)
        return -r[:, 2, :]  # R^T (0, 0, -1)

    # ------------------------------------------------------------------ reset
    def reset(self, seeds=None) -> np.ndarray:
        idx = np.arange(self.n)
        seeds = self.draw_seeds(self.n) if seeds is None else np.asarray(seeds, dtype=np.uint64).reshape(-1)
        if len(seeds) != self.n:
            raise ValueError(f"expected {self.n} seeds, got {len(seeds)}")
        self._reset_envs(idx, seeds)
        return self.obs.copy()

    def _reset_envs(self, idx, seeds):
        if len(idx) == 0:
            return
        for e, s in zip(idx, seeds):
            spec = self.specs[e]
            rp = RandomizedParams.draw(int(s), self.sim)
            self.reset_seed[e] = s
            self.mass[e] = self.robot.torso_mass * rp.mass_scale
            self.inertia[e] = np.asarray(self.robot.torso_inertia) * rp.mass_scale
            self.motor[e] = rp.motor_strength
            self.calib[e] = rp.joint_offset
            self.mu[e] = rp.friction
            self.restitution[e] = rp.restitution
            self.gravity[e] = rp.gravity
            self.pos[e] = (spec.start.x, spec.start.y, self.sim.stand_height)
            self.quat[e] = quat_from_euler(spec.start.phi, spec.start.theta, spec.start.psi)
            if self.mode is Mode.END_TO_END:
                self.goal[e] = (self.goal_x, 0.0)
            else:
                self.goal[e] = spec.goal_xy
        self.vel[idx] = 0.0
        self.omega[idx] = 0.0
        self.q[idx] = self.robot.stand
        self.q_target[idx] = self.robot.stand
        self.qd[idx] = 0.0
        self.qdd[idx] = 0.0
        self.tau[idx] = 0.0
        self.action[idx] = 0.0
        self.prev_action[idx] = 0.0
        self.step_count[idx] = 0
        self.n_c[idx] = 0
        self.n_c_total[idx] = 0
        self.collided[idx] = 0
        self.failed[idx] = 0
        self.status[idx] = RUNNING
        self.lg_has[idx] = False
        self.since_plan[idx] = 0
        self.command[idx] = 0.0
        if self.mode is not Mode.END_TO_END:
            self._plan(idx)
        self._observe(idx)

    # ------------------------------------------------------------------ step
    def step(self, actions) -> StepBatch:
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n, 12):
            raise ValueError(f"actions must have shape ({self.n}, 12), got {actions.shape}")
        if not np.all(np.isfinite(actions)):
            bad = np.nonzero(~np.all(np.isfinite(actions), axis=1))[0]
            raise ValueError(f"non-finite actions for envs {bad.tolist()}")
        # without auto-reset, finished rows stay frozen and ignore their actions
        running = self.status == RUNNING

        t0 = time.perf_counter()
        self.prev_action[running] = self.action[running]
        self.action[running] = actions[running]
        self.q_target[running] = np.clip(self.robot.stand + self.robot.action_scale * actions[running],
                                         self.lower, self.upper)
        active = running.astype(np.uint8)
        dec = self.sim.decimation

        def phys(lo, hi):
            sk.physics_kernel(lo, hi, active, self.pos, self.quat, self.vel, self.omega, self.q, self.qd,
                              self.qdd, self.tau, self.q_target, self.mass, self.inertia, self.motor,
                              self.calib, self.mu, self.restitution, self.gravity, self.pyr, self.npyr,
                              self.planes, self.tris, self.hips, self.lower, self.upper, self.prm, dec,
                              self.collided, self.failed)

        self._parallel(phys, self.n)
        t1 = time.perf_counter()
        self.timings["physics"] += t1 - t0

        failed = np.nonzero(self.failed.astype(bool) & running)[0]
        if len(failed):
            self.status[failed] = FAILED
            raise SimulationDiverged(failed)

        self.n_c[running] = self.collided[running].sum(axis=1)
        self.n_c[~running] = 0
        self.n_c_total += self.n_c
        self.step_count[running] += 1

        # reward against the goal tracked during this step
        roll, pitch, yaw = self.euler()
        rot = rotations_from_quat(self.quat)
        vb = np.einsum("nji,nj->ni", rot, self.vel)
        wb = np.einsum("nji,nj->ni", rot, self.omega)
        x_r, y_r = control.relative_goal(self.pos[:, 0], self.pos[:, 1], yaw, self.goal[:, 0], self.goal[:, 1])
        inputs = {"vx": vb[:, 0], "vy": vb[:, 1], "wz": wb[:, 2], "h_z": self.pos[:, 2], "theta": pitch,
                  "psi": yaw, "x_r": x_r, "y_r": y_r, "qdd": self.qdd, "tau": self.tau, "n_c": self.n_c,
                  "a": self.action, "a_prev": self.prev_action}
        if self.mode is Mode.HIERARCHICAL:
            inputs["x_l"], inputs["y_l"] = control.relative_goal(self.pos[:, 0], self.pos[:, 1], yaw,
                                                                 self.lg_pose[:, 0], self.lg_pose[:, 1])
        elif self.mode is Mode.PARAM_SKILLS:
            inputs["cmd"] = self.command
        reward, terms = control.total_reward(self.mode, inputs, self.reward_cfg, self.explore_weight)
        reward = np.where(running, reward, 0.0)
        terms = {k: np.where(running, v, 0.0) for k, v in terms.items()}

        gz = -rot[:, 2, 2]
        dist = np.hypot(x_r, y_r)
        new_status = termination_status(dist, self.step_count, self.sim.horizon, gz,
                                        self.sim.goal_threshold, self.sim.flip_threshold)
        self.status = np.where(running, new_status, self.status)
        t2 = time.perf_counter()
        self.timings["other"] += t2 - t1

        live = np.nonzero(self.status == RUNNING)[0]
        if self.mode is not Mode.END_TO_END:
            self.since_plan[live] += 1
            reached = np.hypot(self.lg_pose[live, 0] - self.pos[live, 0],
                               self.lg_pose[live, 1] - self.pos[live, 1]) < self.sim.local_goal_threshold
            need = (~self.lg_has[live]) | reached | (self.since_plan[live] >= self.sim.replan_interval)
            self._plan(live[need])
        t3 = time.perf_counter()
        self.timings["planning"] += t3 - t2
        self._observe(np.arange(self.n))

        done = running & (self.status != RUNNING)
        out = StepBatch(
            obs=None, reward=reward, terms=terms, done=done,
            status=np.where(done, self.status, RUNNING), n_c=self.n_c.copy(),
            base_pose=np.column_stack([self.pos, roll, pitch, yaw]), q=self.q.copy(),
            time_out=done & (self.status == TIMEOUT), terminal_obs=self.obs.copy(),
            episode_nc=self.n_c_total.copy(), episode_len=self.step_count.copy(),
        )
        if self.auto_reset and done.any():
            ids = np.nonzero(done)[0]
            self._reset_envs(ids, self.draw_seeds(len(ids)))
        out.obs = self.obs.copy()
        self.timings["other"] += time.perf_counter() - t3
        return out

    # ------------------------------------------------------------------ internals
    def _plan(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) == 0:
            return
        out_pose = self.lg_pose.copy()
        out_index = np.full(self.n, -1, dtype=np.int64)

        def run(lo, hi):
            plan_batch_kernel(idx[lo:hi], self.pos, self.goal, self.table, self.he, self.pyr, self.npyr,
                              CEILING_Z, out_pose, out_index)

        self._parallel(run, len(idx))
        ok = out_index[idx] >= 0
        good = idx[ok]
        self.lg_pose[good] = out_pose[good]
        self.lg_has[good] = True
        self.since_plan[good] = 0
        # no valid candidate: keep the previous goal; with none yet, aim straight ahead
        fresh = idx[~ok & ~self.lg_has[idx]]
        if len(fresh):
            bearing = np.arctan2(self.goal[fresh, 1] - self.pos[fresh, 1], self.goal[fresh, 0] - self.pos[fresh, 0])
            f = self.table[0, 0]
            self.lg_pose[fresh] = np.column_stack([
                self.pos[fresh, 0] + f * np.cos(bearing), self.pos[fresh, 1] + f * np.sin(bearing),
                np.full(len(fresh), self.sim.stand_height), np.zeros(len(fresh)), np.zeros(len(fresh)),
                bearing])

    def _observe(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) == 0:
            return
        t0 = time.perf_counter()
        _, _, yaw = euler_from_quat(self.quat)

        def sense(lo, hi):
            control.heightfield_kernel(lo, hi, self.pos, yaw, self.pyr, self.npyr, control.SCAN_X,
                                       control.SCAN_Y, self.height)

        if len(idx) == self.n:
            self._parallel(sense, self.n)
        else:
            for e in idx:
                sense(int(e), int(e) + 1)
        t1 = time.perf_counter()
        self.timings["sensing"] += t1 - t0

        if self.mode is Mode.END_TO_END:
            cx, cy = control.relative_goal(self.pos[idx, 0], self.pos[idx, 1], yaw[idx],
                                           self.goal[idx, 0], self.goal[idx, 1])
            self.command[idx] = np.column_stack([cx, cy])
        else:
            lx, ly = control.relative_goal(self.pos[idx, 0], self.pos[idx, 1], yaw[idx],
                                           self.lg_pose[idx, 0], self.lg_pose[idx, 1])
            if self.mode is Mode.HIERARCHICAL:
                self.command[idx] = np.column_stack([lx, ly])
            else:
                lg = self.lg_pose[idx]
                self.command[idx] = control.skill_command_batch(lx, ly, lg[:, 2], lg[:, 4], lg[:, 5], yaw[idx],
                                                                self.command[idx])
        g = self.gravity_body()[idx]
        self.obs[idx] = control.assemble_observation(self.mode, g, self.q[idx] + self.calib[idx], self.qd[idx],
                                                     self.height[idx], self.command[idx])

    # ------------------------------------------------------------------ snapshots
    _STATE = ("pos", "quat", "vel", "omega", "q", "qd", "qdd", "tau", "q_target", "action", "prev_action",
              "mass", "inertia", "motor", "calib", "mu", "restitution", "gravity", "step_count", "n_c",
              "n_c_total", "status", "goal", "reset_seed", "lg_pose", "lg_has", "since_plan", "command",
              "height", "obs")

    def state_dict(self) -> dict:
        """Every piece of mutable state, enough to continue bit-exactly after ``load_state_dict``."""
        out = {k: getattr(self, k).copy() for k in self._STATE}
        out["goal_x"] = np.float64(self.goal_x)
        out["explore_weight"] = np.float64(self.explore_weight)
        out["seed_stream"] = np.array(json.dumps(self._seed_stream.bit_generator.state))
        return out

    def load_state_dict(self, st) -> None:
        for k in self._STATE:
            cur = getattr(self, k)
            val = np.asarray(st[k])
            if val.shape != cur.shape:
                raise ValueError(f"state {k!r} has shape {val.shape}, expected {cur.shape}")
            cur[...] = val
        self.goal_x = float(st["goal_x"])
        self.explore_weight = float(st["explore_weight"])
        self._seed_stream.bit_generator.state = json.loads(str(st["seed_stream"]))

    # ------------------------------------------------------------------ diagnostics
    def mechanical_energy(self, e: int = 0) -> float:
        return float(sk.energy_kernel(self.pos[e], self.quat[e], self.vel[e], self.omega[e], self.q[e],
                                      self.mass[e], self.inertia[e], self.gravity[e], self.prm, self.hips,
                                      self.pyr[e], self.npyr[e], self.planes[e], self.tris[e]))

    def proxy_depths(self, e: int = 0) -> np.ndarray:
        out = np.zeros(N_PROXIES)
        sk.proxy_depths_kernel(self.pos[e], self.quat[e], self.q[e], self.prm, self.hips, self.pyr[e],
                               self.npyr[e], self.planes[e], self.tris[e], out)
        return out

    def set_state(self, e: int, pose: Pose6 = None, lin_vel=None, ang_vel=None, q=None, qd=None):
        """Overwrite parts of one robot's state (tests and replay tooling)."""
        if pose is not None:
            self.pos[e] = pose.position
            self.quat[e] = quat_from_euler(pose.phi, pose.theta, pose.psi)
        if lin_vel is not None:
            self.vel[e] = lin_vel
        if ang_vel is not None:
            self.omega[e] = ang_vel
        if q is not None:
            self.q[e] = q
            self.q_target[e] = q
        if qd is not None:
            self.qd[e] = qd
        self._observe([e])


class EnvInstance:
    """One environment; a thin view over a single-row VecEnv."""

    def __init__(self, spec: EnvSpec, mode=Mode.HIERARCHICAL, sim: SimConfig = SimConfig(),
                 reward: RewardConfig = RewardConfig(), robot: RobotParams = RobotParams(),
                 grid: CandidateGrid = CandidateGrid(), goal_x: Optional[float] = None):
        self.spec = spec
        self.vec = VecEnv([spec], mode, sim, reward, robot, grid, auto_reset=False, goal_x=goal_x)

    @property
    def mode(self) -> Mode:
        return self.vec.mode

    @property
    def status(self) -> int:
        return int(self.vec.status[0])

    @property
    def status_name(self) -> str:
        return STATUS_NAMES[self.status]

    @property
    def step_count(self) -> int:
        return int(self.vec.step_count[0])

    @property
    def n_c(self) -> int:
        return int(self.vec.n_c[0])

    @property
    def n_c_total(self) -> int:
        return int(self.vec.n_c_total[0])

    @property
    def robot(self) -> RobotState:
        return self.vec.robot_state(0)

    @property
    def params(self) -> RandomizedParams:
        return self.vec.randomized_params(0)

    @property
    def observation(self) -> np.ndarray:
        return self.vec.obs[0].copy()

    def reset(self, seed: int) -> np.ndarray:
        return self.vec.reset([seed])[0]

    def step(self, action) -> StepResult:
        if self.status != RUNNING:
            raise RuntimeError(f"episode finished with status {self.status_name}; reset first")
        b = self.vec.step(np.asarray(action, dtype=float).reshape(1, 12))
        info = {"n_c": int(b.n_c[0]), "status": STATUS_NAMES[self.status], "base_pose": b.base_pose[0]}
        return StepResult(b.obs[0], float(b.reward[0]), {k: float(v[0]) for k, v in b.terms.items()},
                          bool(b.done[0]), info)


def reset(instance: EnvInstance, seed: int) -> np.ndarray:
    return instance.reset(seed)


def step(instance: EnvInstance, action) -> StepResult:
    return instance.step(action)


def batch_step(vec: VecEnv, actions) -> StepBatch:
    return vec.step(actions)


def check_termination(instance) -> str:
    """Re-evaluate the termination predicate on the instance's current state."""
    vec = instance.vec if isinstance(instance, EnvInstance) else instance
    _, _, yaw = vec.euler()
    x_r, y_r = control.relative_goal(vec.pos[:, 0], vec.pos[:, 1], yaw, vec.goal[:, 0], vec.goal[:, 1])
    st = termination_status(np.hypot(x_r, y_r), vec.step_count, vec.sim.horizon, vec.gravity_body()[:, 2],
                            vec.sim.goal_threshold, vec.sim.flip_threshold)
    names = [STATUS_NAMES[s] for s in st]
    return names[0] if isinstance(instance, EnvInstance) else names

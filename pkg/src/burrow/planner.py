"""Reactive local-goal planner over a fixed grid of candidate torso poses.

Candidates sit a short step ahead of the robot in the frame that points at
the global goal. A candidate is valid when the torso box at that pose clears
every pyramid and stays strictly between the floor and ceiling planes; the
valid candidate nearest the goal (ties by enumeration order) wins.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .geometry import CEILING_Z, Pose6
from .geometry.kernels import JIT, box_vertices, obb_intersects_pyramid, rotation_zyx
from .robot import RobotParams, RobotState


@dataclass(frozen=True)
class CandidateGrid:
    # listed in enumeration order: neutral values first so exact ties favour them
    forward: tuple[float, ...] = (0.3,)
    lateral: tuple[float, ...] = (-0.2, -0.1, 0.0, 0.1, 0.2)
    heights: tuple[float, ...] = (0.30, 0.24, 0.18, 0.12)
    rolls: tuple[float, ...] = (0.0, -0.3, 0.3)
    pitches: tuple[float, ...] = (0.0, -0.3, 0.3)
    yaw_offsets: tuple[float, ...] = (0.0, -0.4, 0.4)

    def __len__(self):
        return (len(self.forward) * len(self.lateral) * len(self.heights) * len(self.rolls)
                * len(self.pitches) * len(self.yaw_offsets))

    def problems(self, params: Optional[RobotParams] = None) -> list[str]:
        errs = []
        reach = (params or RobotParams()).thigh_length + (params or RobotParams()).calf_length
        if any(h <= 0 or h > reach for h in self.heights):
            errs.append(f"candidate heights must lie in (0, {reach:.3f}]")
        if not len(self):
            errs.append("candidate grid is empty")
        return errs

    def local_table(self) -> np.ndarray:
        """(K, 6) rows (forward, lateral, h, roll, pitch, yaw offset) in enumeration order."""
        rows = [(f, l, h, r, p, y) for f in self.forward for l in self.lateral for h in self.heights
                for r in self.rolls for p in self.pitches for y in self.yaw_offsets]
        return np.array(rows, dtype=float)


@dataclass(frozen=True)
class LocalGoal:
    pose: Pose6
    index: int = -1

    def body_xy(self, robot: RobotState) -> tuple[float, float]:
        dx = self.pose.x - robot.base.x
        dy = self.pose.y - robot.base.y
        c, s = math.cos(robot.base.psi), math.sin(robot.base.psi)
        return c * dx + s * dy, -s * dx + c * dy


# compiled core -------------------------------------------------------------------

@njit(**JIT)
def candidates_kernel(x, y, gx, gy, table, out):
    bearing = math.atan2(gy - y, gx - x)
    c = math.cos(bearing)
    s = math.sin(bearing)
    for k in range(table.shape[0]):
        f = table[k, 0]
        l = table[k, 1]
        out[k, 0] = x + c * f - s * l
        out[k, 1] = y + s * f + c * l
        out[k, 2] = table[k, 2]
        out[k, 3] = table[k, 3]
        out[k, 4] = table[k, 4]
        yaw = bearing + table[k, 5]
        # wrap into (-pi, pi]
        yaw = yaw - 2.0 * math.pi * math.floor((yaw + math.pi) / (2.0 * math.pi))
        if yaw == -math.pi:
            yaw = math.pi
        out[k, 5] = yaw


@njit(**JIT)
def candidate_valid(pose, he, pyr, npyr, ceiling):
    rot = np.empty((3, 3))
    rotation_zyx(pose[3], pose[4], pose[5], rot)
    center = pose[:3].copy()
    verts = np.empty((8, 3))
    box_vertices(center, he, rot, verts)
    zmin = np.inf
    zmax = -np.inf
    for k in range(8):
        zmin = min(zmin, verts[k, 2])
        zmax = max(zmax, verts[k, 2])
    if zmin <= 0.0 or zmax >= ceiling:
        return False
    # bounding radius for a cheap reject
    rad = math.sqrt(he[0] * he[0] + he[1] * he[1] + he[2] * he[2])
    for m in range(npyr):
        p = pyr[m]
        if (abs(center[0] - p[0]) > 0.5 * p[3] + rad or abs(center[1] - p[1]) > 0.5 * p[4] + rad):
            continue
        zlo = min(p[2], p[2] + p[5])
        zhi = max(p[2], p[2] + p[5])
        if center[2] + rad < zlo or center[2] - rad > zhi:
            continue
        if obb_intersects_pyramid(center, he, rot, p):
            return False
    return True


@njit(**JIT)
def plan_kernel(x, y, gx, gy, table, he, pyr, npyr, ceiling, out):
    """Write the chosen candidate into ``out`` and return its index, or -1."""
    k = table.shape[0]
    cands = np.empty((k, 6))
    candidates_kernel(x, y, gx, gy, table, cands)
    dist = np.empty(k)
    for i in range(k):
        dist[i] = math.hypot(cands[i, 0] - gx, cands[i, 1] - gy)
    order = np.argsort(dist, kind="mergesort")
    for i in range(k):
        j = order[i]
        if candidate_valid(cands[j], he, pyr, npyr, ceiling):
            for m in range(6):
                out[m] = cands[j, m]
            return j
    return -1


@njit(**JIT)
def plan_batch_kernel(envs, pos, goal, table, he, pyr, npyr, ceiling, out_pose, out_index):
    tmp = np.empty(6)
    for n in range(envs.shape[0]):
        e = envs[n]
        idx = plan_kernel(pos[e, 0], pos[e, 1], goal[e, 0], goal[e, 1], table, he, pyr[e], npyr[e],
                          ceiling, tmp)
        out_index[e] = idx
        if idx >= 0:
            for m in range(6):
                out_pose[e, m] = tmp[m]


# public API ----------------------------------------------------------------------

def _base_xy(robot) -> tuple[float, float]:
    if isinstance(robot, RobotState):
        return robot.base.x, robot.base.y
    if isinstance(robot, Pose6):
        return robot.x, robot.y
    return float(robot[0]), float(robot[1])


def enumerate_candidates(grid: CandidateGrid, robot, goal_xy) -> list[Pose6]:
    x, y = _base_xy(robot)
    out = np.empty((len(grid), 6))
    candidates_kernel(x, y, float(goal_xy[0]), float(goal_xy[1]), grid.local_table(), out)
    return [Pose6(*row) for row in out]


def _pyr(env) -> np.ndarray:
    return np.ascontiguousarray(env.pyramid_array(), dtype=float).reshape(-1, 6)


def is_valid(candidate: Pose6, env, params: RobotParams = RobotParams()) -> bool:
    pyr = _pyr(env)
    return bool(candidate_valid(candidate.as_array(), np.asarray(params.torso_half_extents, float),
                                pyr, pyr.shape[0], CEILING_Z))


def plan_local_goal(robot, env, goal_xy, grid: CandidateGrid = CandidateGrid(),
                    params: RobotParams = RobotParams()) -> Optional[LocalGoal]:
    x, y = _base_xy(robot)
    pyr = _pyr(env)
    out = np.empty(6)
    idx = plan_kernel(x, y, float(goal_xy[0]), float(goal_xy[1]), grid.local_table(),
                      np.asarray(params.torso_half_extents, float), pyr, pyr.shape[0], CEILING_Z, out)
    if idx < 0:
        return None
    return LocalGoal(Pose6(*out), int(idx))


def local_goal_reached(robot, lg: LocalGoal, d_l: float = 0.1) -> bool:
    if not d_l > 0:
        raise ValueError("d_l must be positive")
    x, y = _base_xy(robot)
    return math.hypot(lg.pose.x - x, lg.pose.y - y) < d_l


def plan_debug_record(robot, env, goal_xy, grid: CandidateGrid = CandidateGrid(),
                      params: RobotParams = RobotParams()) -> dict:
    """Every candidate with its validity flag and goal distance, JSON-ready."""
    cands = enumerate_candidates(grid, robot, goal_xy)
    chosen = plan_local_goal(robot, env, goal_xy, grid, params)
    rows = []
    for k, c in enumerate(cands):
        rows.append({
            "index": k,
            "pose": c.as_array().tolist(),
            "valid": is_valid(c, env, params),
            "score": math.hypot(c.x - goal_xy[0], c.y - goal_xy[1]),
        })
    x, y = _base_xy(robot)
    return {"robot_xy": [x, y], "goal_xy": list(map(float, goal_xy)),
            "chosen": None if chosen is None else chosen.index, "candidates": rows}


def dump_plan_debug(path, records) -> None:
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

"""3D primitives and the height / collision queries the rest of the stack uses.

Vectors are plain ``numpy`` arrays of shape ``(3,)``. All queries are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels as _k

__all__ = [
    "CEILING_Z",
    "Capsule",
    "Obb",
    "Pose6",
    "Pyramid",
    "TriMesh",
    "capsule_mesh_penetration",
    "ceiling_height",
    "floor_height",
    "obb_intersects_mesh",
    "point_in_mesh",
    "pyramid_to_mesh",
    "rotation_matrix",
    "surface_height_at",
    "wrap_angle",
]

CEILING_Z = 0.5


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Intrinsic yaw-pitch-roll rotation ``Rz(psi) @ Ry(theta) @ Rx(phi)``."""
    out = np.empty((3, 3))
    _k.rotation_zyx(float(phi), float(theta), float(psi), out)
    return out


@dataclass(frozen=True)
class Pose6:
    x: float
    y: float
    h_z: float
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.h_z, self.phi, self.theta, self.psi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose {vals}")
        for name in ("phi", "theta", "psi"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h_z])

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.phi, self.theta, self.psi)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h_z, self.phi, self.theta, self.psi])


@dataclass(frozen=True)
class Pyramid:
    """Rectangular pyramid; ``hp`` is the signed tip height over the base plane."""

    xp: float
    yp: float
    zp: float
    lp: float
    wp: float
    hp: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite pyramid parameters {vals.tolist()}")
        if self.lp <= 0 or self.wp <= 0:
            raise ValueError(f"pyramid base must be positive, got lp={self.lp}, wp={self.wp}")
        if self.hp == 0:
            raise ValueError("pyramid tip height must be non-zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.xp, self.yp, self.zp, self.lp, self.wp, self.hp], dtype=float)


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if t.size and np.any(self.areas_of(v, t) <= 1e-12):
            raise ValueError("degenerate triangle (area <= 1e-12)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @staticmethod
    def areas_of(v, t):
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    @property
    def triangle_vertices(self) -> np.ndarray:
        """(T, 3, 3) corner coordinates."""
        return self.vertices[self.triangles]

    def area(self) -> float:
        return float(self.areas_of(self.vertices, self.triangles).sum())

    def face_planes(self) -> np.ndarray:
        """(T, 4) outward unit normal and offset for every triangle."""
        tv = self.triangle_vertices
        n = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        d = np.einsum("ij,ij->i", n, tv[:, 0])
        return np.column_stack([n, d])


@dataclass(frozen=True)
class Obb:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        he = np.asarray(self.half_extents, dtype=float).reshape(3)
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.any(he <= 0):
            raise ValueError("box half extents must be positive")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("box orientation is not orthonormal")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def from_pose(cls, pose: Pose6, half_extents) -> "Obb":
        return cls(pose.position, half_extents, pose.rotation)

    def vertices(self) -> np.ndarray:
        out = np.empty((8, 3))
        _k.box_vertices(self.center, self.half_extents, self.rotation, out)
        return out


@dataclass(frozen=True)
class Capsule:
    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("capsule radius must be positive")
        object.__setattr__(self, "endpoint_a", np.asarray(self.endpoint_a, dtype=float).reshape(3))
        object.__setattr__(self, "endpoint_b", np.asarray(self.endpoint_b, dtype=float).reshape(3))


def pyramid_to_mesh(p: Pyramid) -> TriMesh:
    """Closed 5-vertex, 6-triangle mesh (4 lateral faces, 2 base triangles)."""
    arr = p.as_array()
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite pyramid")
    verts = np.empty((5, 3))
    _k.pyramid_vertices(arr, verts)
    tris = _k.PYRAMID_TRIANGLES.copy()
    if p.hp < 0:
        tris[:, [1, 2]] = tris[:, [2, 1]]
    return TriMesh(verts, tris)


def surface_height_at(p: Pyramid, x: float, y: float) -> Optional[float]:
    z = _k.surface_height(p.as_array(), float(x), float(y))
    return None if math.isnan(z) else float(z)


def floor_height(field: Sequence[Pyramid], x: float, y: float) -> float:
    h = 0.0
    for p in field:
        z = surface_height_at(p, x, y)
        if z is not None and z > h:
            h = z
    return h


def ceiling_height(field: Sequence[Pyramid], x: float, y: float) -> float:
    h = CEILING_Z
    for p in field:
        z = surface_height_at(p, x, y)
        if z is not None and z < h:
            h = z
    return h


def point_in_mesh(m: TriMesh, point) -> bool:
    """Ray-parity containment test for a closed mesh."""
    p = np.asarray(point, dtype=float)
    # irrational-ish direction to avoid grazing edges and vertices
    d = np.array([0.5773502691896258, 0.5345224838248488, 0.6172133998483676])
    tv = m.triangle_vertices
    e1 = tv[:, 1] - tv[:, 0]
    e2 = tv[:, 2] - tv[:, 0]
    h = np.cross(d, e2)
    a = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(a) > 1e-15
    f = np.where(ok, 1.0 / np.where(ok, a, 1.0), 0.0)
    s = p - tv[:, 0]
    u = f * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = f * (q @ d)
    t = f * np.einsum("ij,ij->i", e2, q)
    hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return bool(hits.sum() % 2 == 1)


def obb_intersects_mesh(b: Obb, m: TriMesh) -> bool:
    """True iff the box overlaps any triangle or lies inside the closed mesh."""
    for tri in m.triangle_vertices:
        if _k.obb_triangle_overlap(b.center, b.half_extents, b.rotation, np.ascontiguousarray(tri)):
            return True
    return point_in_mesh(m, b.center)


def capsule_mesh_penetration(c: Capsule, m: TriMesh) -> tuple[float, np.ndarray]:
    """Deepest penetration of a capsule into a closed convex mesh.

    Returns ``(depth, normal)``; depth is 0 when disjoint and ``normal`` is the
    unit direction that pushes the capsule out of the solid.
    """
    planes = np.ascontiguousarray(m.face_planes())
    tris = np.ascontiguousarray(m.triangle_vertices)
    normal = np.zeros(3)
    point = np.zeros(3)
    sd = _k.segment_min_signed_distance(c.endpoint_a, c.endpoint_b, planes, tris, normal, point)
    depth = c.radius - sd
    if depth <= 0.0:
        return 0.0, normal
    return float(depth), normal

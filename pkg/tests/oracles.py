"""Independent reference implementations used to check the package.

Nothing here imports the package's geometry kernels: pyramids are rebuilt
from their parameters, heights come from vertical ray casts through the
triangles, overlap depth from a linear program, and penetration depth from
dense sampling refined by a bounded 1-D search.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog, minimize_scalar


# ---------------------------------------------------------------- pyramids
def pyramid_corners(p):
    """Apex then the four base corners for parameters (x, y, z, l, w, h)."""
    x, y, z, l, w, h = (float(v) for v in p)
    apex = np.array([x, y, z + h])
    base = np.array([[x - l / 2, y - w / 2, z], [x + l / 2, y - w / 2, z],
                     [x + l / 2, y + w / 2, z], [x - l / 2, y + w / 2, z]])
    return apex, base


def pyramid_triangles(p) -> np.ndarray:
    apex, b = pyramid_corners(p)
    tris = [[apex, b[k], b[(k + 1) % 4]] for k in range(4)]
    tris += [[b[0], b[1], b[2]], [b[0], b[2], b[3]]]
    return np.array(tris)


def pyramid_halfspaces(p):
    """(A, b) with unit outward rows so that the solid is A x <= b."""
    apex, base = pyramid_corners(p)
    centroid = (apex + base.sum(axis=0)) / 5.0
    faces = [(apex, base[k], base[(k + 1) % 4]) for k in range(4)] + [(base[0], base[1], base[2])]
    rows, offs = [], []
    for a, b, c in faces:
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        d = n @ a
        if n @ centroid > d:
            n, d = -n, -d
        rows.append(n)
        offs.append(d)
    return np.array(rows), np.array(offs)


def box_halfspaces(center, he, rot):
    rot = np.asarray(rot, float)
    rows, offs = [], []
    for k in range(3):
        axis = rot[:, k]
        rows += [axis, -axis]
        offs += [axis @ center + he[k], -(axis @ center) + he[k]]
    return np.array(rows), np.array(offs)


def rot_zyx(phi, theta, psi):
    cx, sx = math.cos(phi), math.sin(phi)
    cy, sy = math.cos(theta), math.sin(theta)
    cz, sz = math.cos(psi), math.sin(psi)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return rz @ ry @ rx


# ---------------------------------------------------------------- ray casts
def vertical_hits(tris: np.ndarray, x: float, y: float, tol: float = 1e-12) -> list:
    """z of every triangle crossed by the vertical line through (x, y)."""
    out = []
    for a, b, c in tris:
        m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
        det = np.linalg.det(m)
        if abs(det) < 1e-15:
            continue  # vertical or degenerate in plan view
        s, t = np.linalg.solve(m, [x - a[0], y - a[1]])
        if s >= -tol and t >= -tol and s + t <= 1 + tol:
            out.append(a[2] + s * (b[2] - a[2]) + t * (c[2] - a[2]))
    return out


def floor_height_raycast(pyramids, x, y) -> float:
    h = 0.0
    for p in pyramids:
        if p[5] > 0:
            hits = vertical_hits(pyramid_triangles(p), x, y)
            if hits:
                h = max(h, max(hits))
    return h


def ceiling_height_raycast(pyramids, x, y, ceiling=0.5) -> float:
    h = ceiling
    for p in pyramids:
        if p[5] < 0:
            hits = vertical_hits(pyramid_triangles(p), x, y)
            if hits:
                h = min(h, min(hits))
    return h


def heightfield_raycast(pyramids, base_xyz, yaw) -> np.ndarray:
    """220 clamped clearances using the documented scandot layout."""
    xs = 0.1 + 0.1 * np.arange(10)
    ys = -0.5 + 0.1 * np.arange(11)
    c, s = math.cos(yaw), math.sin(yaw)
    floor, ceil = [], []
    bx, by, bz = base_xyz
    for fx in xs:
        for fy in ys:
            wx = bx + c * fx - s * fy
            wy = by + s * fx + c * fy
            floor.append(min(max(bz - floor_height_raycast(pyramids, wx, wy), 0.0), 1.0))
            ceil.append(min(max(ceiling_height_raycast(pyramids, wx, wy) - bz, 0.0), 1.0))
    return np.array(floor + ceil)


# ---------------------------------------------------------------- overlap
def overlap_depth(a1, b1, a2, b2) -> float:
    """Largest t such that some point lies t inside every face plane of both solids.

    Positive: the interiors overlap. Negative: the solids are apart and every
    face would have to move out by |t| before they touch.
    """
    a = np.vstack([a1, a2])
    b = np.concatenate([b1, b2])
    lhs = np.hstack([a, np.ones((len(a), 1))])
    res = linprog(c=[0, 0, 0, -1], A_ub=lhs, b_ub=b, bounds=[(None, None)] * 3 + [(-10, 10)], method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.x[3])


def inside(a, b, pts, tol=0.0) -> np.ndarray:
    return np.all(pts @ a.T <= b + tol, axis=1)


def _sample_triangles(tris, n, rng):
    areas = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    pick = rng.choice(len(tris), size=n, p=areas / areas.sum())
    u = rng.random((n, 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    t = tris[pick]
    return t[:, 0] + u[:, :1] * (t[:, 1] - t[:, 0]) + u[:, 1:] * (t[:, 2] - t[:, 0])


def _sample_edges(verts, edges, n, rng):
    per = max(1, n // len(edges))
    s = np.linspace(0.0, 1.0, per)[:, None]
    return np.vstack([verts[i] + s * (verts[j] - verts[i]) for i, j in edges])


def box_corners(center, he, rot):
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    return center + (signs * he) @ np.asarray(rot).T


def box_surface_samples(center, he, rot, n, rng):
    v = box_corners(center, he, rot)
    edges = [(i, j) for i in range(8) for j in range(i + 1, 8) if bin(i ^ j).count("1") == 1]
    quads = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]]
    tris = np.array([[v[q[0]], v[q[1]], v[q[2]]] for q in quads] + [[v[q[0]], v[q[2]], v[q[3]]] for q in quads])
    half = n // 2
    return np.vstack([v, _sample_edges(v, edges, half, rng), _sample_triangles(tris, n - half - 8, rng)])


def pyramid_surface_samples(p, n, rng):
    apex, base = pyramid_corners(p)
    v = np.vstack([apex, base])
    edges = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (2, 3), (3, 4), (4, 1)]
    half = n // 2
    return np.vstack([v, _sample_edges(v, edges, half, rng), _sample_triangles(pyramid_triangles(p), n - half - 5, rng)])


def box_pyramid_sampled(center, he, rot, p, rng, n=100_000) -> bool:
    """Overlap decided from 10^5 surface samples (vertices, edges, faces) of each solid."""
    ab, bb = box_halfspaces(center, he, rot)
    ap, bp = pyramid_halfspaces(p)
    if inside(ap, bp, box_surface_samples(center, he, rot, n // 2, rng)).any():
        return True
    return bool(inside(ab, bb, pyramid_surface_samples(p, n - n // 2, rng)).any())


# ---------------------------------------------------------------- penetration
def _closest_on_triangles(pts, tris):
    """Distance from each point to the nearest triangle (brute force, projected barycentrics)."""
    best = np.full(len(pts), np.inf)
    for a, b, c in tris:
        e0, e1 = b - a, c - a
        n = np.cross(e0, e1)
        n /= np.linalg.norm(n)
        d = pts - a
        proj = d - np.outer(d @ n, n)
        g = np.array([[e0 @ e0, e0 @ e1], [e0 @ e1, e1 @ e1]])
        st = np.linalg.solve(g, np.vstack([proj @ e0, proj @ e1]))
        s, t = st
        in_face = (s >= 0) & (t >= 0) & (s + t <= 1)
        dist = np.where(in_face, np.abs(d @ n), np.inf)
        for p0, p1 in ((a, b), (b, c), (c, a)):
            seg = p1 - p0
            u = np.clip(((pts - p0) @ seg) / (seg @ seg), 0.0, 1.0)
            dist = np.minimum(dist, np.linalg.norm(pts - (p0 + u[:, None] * seg), axis=1))
        best = np.minimum(best, dist)
    return best


def signed_distance(pts, p) -> np.ndarray:
    a, b = pyramid_halfspaces(p)
    pts = np.atleast_2d(pts)
    plane = np.max(pts @ a.T - b, axis=1)
    outside = plane > 0
    out = plane.copy()
    if outside.any():
        out[outside] = _closest_on_triangles(pts[outside], pyramid_triangles(p))
    return out


def capsule_depth_sampled(a, b, radius, p, n=100_000) -> float:
    """Penetration depth of a capsule into a pyramid: dense samples along the axis, then a bounded refine."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    s = np.linspace(0.0, 1.0, n)
    sd = signed_distance(a + s[:, None] * (b - a), p)
    k = int(np.argmin(sd))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, n - 1)]
    # signed distance to a convex solid is convex along a segment, so the bracket holds the minimum
    res = minimize_scalar(lambda u: signed_distance(a + u * (b - a), p)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    best = min(sd[k], res.fun)
    return max(0.0, radius - best)


# ---------------------------------------------------------------- learning
def discounted_advantages(rewards, values, dones, bootstrap, gamma, lam):
    """GAE by explicit double sums over future TD errors, one env column at a time."""
    rewards = np.asarray(rewards, float)
    T, N = rewards.shape
    adv = np.zeros((T, N))
    for e in range(N):
        nxt = np.append(values[1:, e], bootstrap[e])
        deltas = rewards[:, e] + gamma * nxt * (1 - dones[:, e]) - values[:, e]
        for t in range(T):
            total, weight = 0.0, 1.0
            for k in range(t, T):
                total += weight * deltas[k]
                if dones[k, e]:
                    break
                weight *= gamma * lam
            adv[t, e] = total
    return adv, adv + values


def monte_carlo_returns(rewards, dones, bootstrap, gamma):
    rewards = np.asarray(rewards, float)
    T, N = rewards.shape
    out = np.zeros((T, N))
    for e in range(N):
        for t in range(T):
            total, weight, cut = 0.0, 1.0, False
            for k in range(t, T):
                total += weight * rewards[k, e]
                weight *= gamma
                if dones[k, e]:
                    cut = True
                    break
            if not cut:
                total += weight * bootstrap[e]
            out[t, e] = total
    return out


def gaussian_log_density(x, mean, std):
    x, mean, std = (np.asarray(v, float) for v in (x, mean, std))
    return float(np.sum(-((x - mean) ** 2) / (2 * std ** 2) - np.log(std) - 0.5 * math.log(2 * math.pi)))

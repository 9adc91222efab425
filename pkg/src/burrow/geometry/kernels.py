"""Compiled geometry primitives shared by the public API, planner and simulator.

Pyramids are passed around as length-6 float arrays ``(xp, yp, zp, lp, wp, hp)``.
Vertex layout: 0..3 are base corners counter-clockwise seen from +z starting
at (-l/2, -w/2); 4 is the apex.
"""
import math

import numpy as np
from numba import njit

JIT = dict(cache=True, nogil=True)
# allocation-free kernels skip reference counting, which dominates small hot calls
HOT = dict(cache=True, nogil=True, _nrt=False)

SAT_EPS = 1e-12

# outward winding for hp > 0; reversed for ceiling pyramids
PYRAMID_TRIANGLES = np.array(
    [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [0, 2, 1], [0, 3, 2]], dtype=np.int64
)


@njit(**HOT)
def pyramid_vertices(p, out):
    hx = 0.5 * p[3]
    hy = 0.5 * p[4]
    sx = (-1.0, 1.0, 1.0, -1.0)
    sy = (-1.0, -1.0, 1.0, 1.0)
    for k in range(4):
        out[k, 0] = p[0] + sx[k] * hx
        out[k, 1] = p[1] + sy[k] * hy
        out[k, 2] = p[2]
    out[4, 0] = p[0]
    out[4, 1] = p[1]
    out[4, 2] = p[2] + p[5]


@njit(**JIT)
def pyramid_triangle(p, k, verts, out):
    """Write triangle ``k`` of pyramid ``p`` (outward winding) into ``out`` (3, 3)."""
    a = PYRAMID_TRIANGLES[k, 0]
    b = PYRAMID_TRIANGLES[k, 1]
    c = PYRAMID_TRIANGLES[k, 2]
    if p[5] < 0.0:
        b, c = c, b
    for m in range(3):
        out[0, m] = verts[a, m]
        out[1, m] = verts[b, m]
        out[2, m] = verts[c, m]


@njit(**JIT)
def pyramid_planes(p, out):
    """Outward unit normals and offsets of the 5 faces: inside iff n.x - d <= 0."""
    verts = np.empty((5, 3))
    pyramid_vertices(p, verts)
    tri = np.empty((3, 3))
    for k in range(5):
        pyramid_triangle(p, k, verts, tri)
        ux = tri[1, 0] - tri[0, 0]
        uy = tri[1, 1] - tri[0, 1]
        uz = tri[1, 2] - tri[0, 2]
        vx = tri[2, 0] - tri[0, 0]
        vy = tri[2, 1] - tri[0, 1]
        vz = tri[2, 2] - tri[0, 2]
        nx = uy * vz - uz * vy
        ny = uz * vx - ux * vz
        nz = ux * vy - uy * vx
        nn = math.sqrt(nx * nx + ny * ny + nz * nz)
        nx /= nn
        ny /= nn
        nz /= nn
        out[k, 0] = nx
        out[k, 1] = ny
        out[k, 2] = nz
        out[k, 3] = nx * tri[0, 0] + ny * tri[0, 1] + nz * tri[0, 2]


@njit(**JIT)
def pyramid_aabb(p, out):
    out[0] = p[0] - 0.5 * p[3]
    out[1] = p[1] - 0.5 * p[4]
    out[2] = min(p[2], p[2] + p[5])
    out[3] = p[0] + 0.5 * p[3]
    out[4] = p[1] + 0.5 * p[4]
    out[5] = max(p[2], p[2] + p[5])


@njit(**JIT)
def surface_height(p, x, y):
    """Lateral-surface z above (x, y), or NaN outside the closed base rectangle."""
    hx = 0.5 * p[3]
    hy = 0.5 * p[4]
    u = abs(x - p[0]) / hx
    v = abs(y - p[1]) / hy
    if u > 1.0 or v > 1.0:
        return np.nan
    return p[2] + p[5] * (1.0 - max(u, v))


@njit(**HOT)
def closest_point_on_triangle(px, py, pz, tri):
    """Closest point on a triangle to a point (Voronoi-region walk)."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return ax + t * abx, ay + t * aby, az + t * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return ax + t * acx, ay + t * acy, az + t * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + t * (cx - bx), by + t * (cy - by), bz + t * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(**HOT)
def closest_point_triangle(px, py, pz, tri, out):
    out[0], out[1], out[2] = closest_point_on_triangle(px, py, pz, tri)


@njit(**HOT)
def _nearest_boundary(px, py, pz, tris):
    dmin = np.inf
    qx = qy = qz = 0.0
    for t in range(tris.shape[0]):
        cx, cy, cz = closest_point_on_triangle(px, py, pz, tris[t])
        dx = px - cx
        dy = py - cy
        dz = pz - cz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < dmin:
            dmin = d2
            qx, qy, qz = cx, cy, cz
    return math.sqrt(dmin), qx, qy, qz


@njit(**HOT)
def _max_plane(px, py, pz, planes):
    best = -np.inf
    kbest = 0
    for k in range(planes.shape[0]):
        s = planes[k, 0] * px + planes[k, 1] * py + planes[k, 2] * pz - planes[k, 3]
        if s > best:
            best = s
            kbest = k
    return best, kbest


@njit(**HOT)
def signed_distance_value(px, py, pz, planes, tris):
    best, _ = _max_plane(px, py, pz, planes)
    if best <= 0.0:
        return best
    return _nearest_boundary(px, py, pz, tris)[0]


@njit(**HOT)
def signed_distance_convex(px, py, pz, planes, tris, normal):
    """Signed distance from a point to a closed convex solid.

    ``planes`` (F, 4) are the outward face planes, ``tris`` (T, 3, 3) the
    boundary triangles. Writes the outward unit normal at the nearest feature.
    """
    best, kbest = _max_plane(px, py, pz, planes)
    if best > 0.0:
        d, qx, qy, qz = _nearest_boundary(px, py, pz, tris)
        if d > 0.0:
            normal[0] = (px - qx) / d
            normal[1] = (py - qy) / d
            normal[2] = (pz - qz) / d
            return d
        best = d
    normal[0] = planes[kbest, 0]
    normal[1] = planes[kbest, 1]
    normal[2] = planes[kbest, 2]
    return best


@njit(**HOT)
def segment_min_signed_distance(a, b, planes, tris, normal, point):
    """Minimise the (convex) signed distance along segment a-b by golden section.

    Returns the minimum and writes the argmin point and its outward normal.
    """
    invphi = 0.6180339887498949
    lo = 0.0
    hi = 1.0
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dz = b[2] - a[2]
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1 = signed_distance_value(a[0] + x1 * dx, a[1] + x1 * dy, a[2] + x1 * dz, planes, tris)
    f2 = signed_distance_value(a[0] + x2 * dx, a[1] + x2 * dy, a[2] + x2 * dz, planes, tris)
    for _ in range(80):
        if hi - lo < 1e-13:
            break
        if f1 <= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - invphi * (hi - lo)
            f1 = signed_distance_value(a[0] + x1 * dx, a[1] + x1 * dy, a[2] + x1 * dz, planes, tris)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + invphi * (hi - lo)
            f2 = signed_distance_value(a[0] + x2 * dx, a[1] + x2 * dy, a[2] + x2 * dz, planes, tris)
    best_t = 0.5 * (lo + hi)
    best = signed_distance_value(a[0] + best_t * dx, a[1] + best_t * dy, a[2] + best_t * dz, planes, tris)
    # convex minimum may sit on an endpoint
    for t in (0.0, 1.0):
        v = signed_distance_value(a[0] + t * dx, a[1] + t * dy, a[2] + t * dz, planes, tris)
        if v < best:
            best = v
            best_t = t
    point[0] = a[0] + best_t * dx
    point[1] = a[1] + best_t * dy
    point[2] = a[2] + best_t * dz
    return signed_distance_convex(point[0], point[1], point[2], planes, tris, normal)


@njit(**HOT)
def _axis_separates(ax, ay, az, v0, v1, v2, he, eps):
    # triangle vertices already in box frame; he box half extents
    p0 = ax * v0[0] + ay * v0[1] + az * v0[2]
    p1 = ax * v1[0] + ay * v1[1] + az * v1[2]
    p2 = ax * v2[0] + ay * v2[1] + az * v2[2]
    r = he[0] * abs(ax) + he[1] * abs(ay) + he[2] * abs(az)
    lo = min(p0, min(p1, p2))
    hi = max(p0, max(p1, p2))
    return lo > r + eps or hi < -r - eps


@njit(**JIT)
def obb_triangle_overlap(center, he, rot, tri):
    """13-axis separating-axis test between an oriented box and a triangle.

    ``rot`` columns are the box axes in world frame. Touching counts as overlap.
    """
    v0 = np.empty(3)
    v1 = np.empty(3)
    v2 = np.empty(3)
    for m in range(3):
        d0 = tri[0, 0] - center[0], tri[0, 1] - center[1], tri[0, 2] - center[2]
        d1 = tri[1, 0] - center[0], tri[1, 1] - center[1], tri[1, 2] - center[2]
        d2 = tri[2, 0] - center[0], tri[2, 1] - center[1], tri[2, 2] - center[2]
        v0[m] = rot[0, m] * d0[0] + rot[1, m] * d0[1] + rot[2, m] * d0[2]
        v1[m] = rot[0, m] * d1[0] + rot[1, m] * d1[1] + rot[2, m] * d1[2]
        v2[m] = rot[0, m] * d2[0] + rot[1, m] * d2[1] + rot[2, m] * d2[2]
    eps = SAT_EPS
    # box face normals
    for m in range(3):
        lo = min(v0[m], min(v1[m], v2[m]))
        hi = max(v0[m], max(v1[m], v2[m]))
        if lo > he[m] + eps or hi < -he[m] - eps:
            return False
    e0 = (v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2])
    e1 = (v2[0] - v1[0], v2[1] - v1[1], v2[2] - v1[2])
    e2 = (v0[0] - v2[0], v0[1] - v2[1], v0[2] - v2[2])
    # triangle normal
    nx = e0[1] * e1[2] - e0[2] * e1[1]
    ny = e0[2] * e1[0] - e0[0] * e1[2]
    nz = e0[0] * e1[1] - e0[1] * e1[0]
    if _axis_separates(nx, ny, nz, v0, v1, v2, he, eps):
        return False
    # box axis x triangle edge
    for e in (e0, e1, e2):
        # (1,0,0) x e
        if _axis_separates(0.0, -e[2], e[1], v0, v1, v2, he, eps):
            return False
        # (0,1,0) x e
        if _axis_separates(e[2], 0.0, -e[0], v0, v1, v2, he, eps):
            return False
        # (0,0,1) x e
        if _axis_separates(-e[1], e[0], 0.0, v0, v1, v2, he, eps):
            return False
    return True


@njit(**HOT)
def point_in_planes(px, py, pz, planes):
    for k in range(planes.shape[0]):
        if planes[k, 0] * px + planes[k, 1] * py + planes[k, 2] * pz - planes[k, 3] > 0.0:
            return False
    return True


@njit(**JIT)
def obb_intersects_pyramid(center, he, rot, p):
    """Torso box versus one pyramid solid: per-triangle SAT plus containment."""
    verts = np.empty((5, 3))
    pyramid_vertices(p, verts)
    tri = np.empty((3, 3))
    for k in range(6):
        pyramid_triangle(p, k, verts, tri)
        if obb_triangle_overlap(center, he, rot, tri):
            return True
    planes = np.empty((5, 4))
    pyramid_planes(p, planes)
    return point_in_planes(center[0], center[1], center[2], planes)


@njit(**HOT)
def box_vertices(center, he, rot, out):
    k = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                lx = sx * he[0]
                ly = sy * he[1]
                lz = sz * he[2]
                for m in range(3):
                    out[k, m] = center[m] + rot[m, 0] * lx + rot[m, 1] * ly + rot[m, 2] * lz
                k += 1


@njit(**HOT)
def _project_range(verts, ax, ay, az):
    lo = np.inf
    hi = -np.inf
    for k in range(verts.shape[0]):
        s = verts[k, 0] * ax + verts[k, 1] * ay + verts[k, 2] * az
        lo = min(lo, s)
        hi = max(hi, s)
    return lo, hi


@njit(**HOT)
def _support_average(verts, ax, ay, az, sign, out):
    # mean of the vertices extreme along sign * axis (ties within 1e-9)
    best = -np.inf
    for k in range(verts.shape[0]):
        s = sign * (verts[k, 0] * ax + verts[k, 1] * ay + verts[k, 2] * az)
        best = max(best, s)
    cnt = 0
    out[0] = out[1] = out[2] = 0.0
    for k in range(verts.shape[0]):
        s = sign * (verts[k, 0] * ax + verts[k, 1] * ay + verts[k, 2] * az)
        if s >= best - 1e-9:
            out[0] += verts[k, 0]
            out[1] += verts[k, 1]
            out[2] += verts[k, 2]
            cnt += 1
    out[0] /= cnt
    out[1] /= cnt
    out[2] /= cnt


PENETRATION_WORK_ROWS = 46


@njit(**JIT)
def obb_pyramid_penetration(center, he, rot, p, normal, point):
    """Convex-polytope SAT penetration depth of a box into a pyramid.

    Returns the minimal overlap over all 26 candidate axes (<= 0 when
    separated); ``normal`` points from the pyramid toward the box and
    ``point`` is an approximate contact location.
    """
    planes = np.empty((5, 4))
    pyramid_planes(p, planes)
    ws = np.empty((PENETRATION_WORK_ROWS, 3))
    return obb_pyramid_penetration_ws(center, he, rot, p, planes, normal, point, ws)


@njit(**HOT)
def obb_pyramid_penetration_ws(center, he, rot, p, planes, normal, point, ws):
    """``obb_pyramid_penetration`` with precomputed face planes and (46, 3) scratch."""
    bv = ws[0:8]
    box_vertices(center, he, rot, bv)
    pv = ws[8:13]
    pyramid_vertices(p, pv)
    # candidate axes: 3 box, 5 faces, then up to 3 x 6 edge crosses
    axes = ws[13:39]
    n = 0
    for m in range(3):
        axes[n, 0] = rot[0, m]
        axes[n, 1] = rot[1, m]
        axes[n, 2] = rot[2, m]
        n += 1
    for k in range(5):
        axes[n, 0] = planes[k, 0]
        axes[n, 1] = planes[k, 1]
        axes[n, 2] = planes[k, 2]
        n += 1
    edges = ws[39:45]
    edges[0, 0], edges[0, 1], edges[0, 2] = 1.0, 0.0, 0.0
    edges[1, 0], edges[1, 1], edges[1, 2] = 0.0, 1.0, 0.0
    for k in range(4):
        edges[2 + k, 0] = pv[4, 0] - pv[k, 0]
        edges[2 + k, 1] = pv[4, 1] - pv[k, 1]
        edges[2 + k, 2] = pv[4, 2] - pv[k, 2]
    for m in range(3):
        bx, by, bz = rot[0, m], rot[1, m], rot[2, m]
        for k in range(6):
            cx = by * edges[k, 2] - bz * edges[k, 1]
            cy = bz * edges[k, 0] - bx * edges[k, 2]
            cz = bx * edges[k, 1] - by * edges[k, 0]
            nn = math.sqrt(cx * cx + cy * cy + cz * cz)
            if nn < 1e-9:
                continue
            axes[n, 0] = cx / nn
            axes[n, 1] = cy / nn
            axes[n, 2] = cz / nn
            n += 1
    pcx = pcy = pcz = 0.0
    for k in range(5):
        pcx += pv[k, 0] / 5.0
        pcy += pv[k, 1] / 5.0
        pcz += pv[k, 2] / 5.0
    best = np.inf
    kb = 0
    sb = 1.0
    for a in range(n):
        ax, ay, az = axes[a, 0], axes[a, 1], axes[a, 2]
        blo, bhi = _project_range(bv, ax, ay, az)
        plo, phi = _project_range(pv, ax, ay, az)
        ov = min(bhi, phi) - max(blo, plo)
        if ov < best:
            best = ov
            kb = a
            # orient from pyramid toward box; face normals already point outward
            dc = (center[0] - pcx) * ax + (center[1] - pcy) * ay + (center[2] - pcz) * az
            if 3 <= a < 8:
                sb = 1.0
            else:
                sb = 1.0 if dc >= 0.0 else -1.0
        if best < 0.0:
            break
    normal[0] = sb * axes[kb, 0]
    normal[1] = sb * axes[kb, 1]
    normal[2] = sb * axes[kb, 2]
    tmp = ws[45]
    if kb < 3:
        # box face: deepest pyramid feature inside the box
        _support_average(pv, normal[0], normal[1], normal[2], 1.0, point)
    elif kb < 8:
        _support_average(bv, normal[0], normal[1], normal[2], -1.0, point)
    else:
        _support_average(pv, normal[0], normal[1], normal[2], 1.0, point)
        _support_average(bv, normal[0], normal[1], normal[2], -1.0, tmp)
        for m in range(3):
            point[m] = 0.5 * (point[m] + tmp[m])
    return best


@njit(**HOT)
def rotation_zyx(phi, theta, psi, out):
    """R = Rz(psi) Ry(theta) Rx(phi); columns are body axes in world frame."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    out[0, 0] = cp * ct
    out[0, 1] = cp * st * sf - sp * cf
    out[0, 2] = cp * st * cf + sp * sf
    out[1, 0] = sp * ct
    out[1, 1] = sp * st * sf + cp * cf
    out[1, 2] = sp * st * cf - cp * sf
    out[2, 0] = -st
    out[2, 1] = ct * sf
    out[2, 2] = ct * cf

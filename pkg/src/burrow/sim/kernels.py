"""Compiled physics for the reduced-order robot.

Per substep: PD torques -> joint servo integration -> leg kinematics ->
penalty contacts -> one linearly-implicit solve for the 6-DoF base twist.

Contacts are spring-damper in the normal direction with the spring evaluated
at the end of the step (backward Euler), viscous sticking friction capped by
Coulomb's law, and an active set that drops pulling contacts. The implicit
spring keeps the discrete contact model dissipative.
"""
import math

import numpy as np
from numba import njit

from ..geometry.kernels import (HOT, JIT, PENETRATION_WORK_ROWS, obb_pyramid_penetration_ws,
                                segment_min_signed_distance, signed_distance_convex)
from ..robot import calf_capsule_end, leg_points_body

MAX_CONTACTS = 160
CONTACT_MARGIN = 0.02
WORK_ROWS = 36 + PENETRATION_WORK_ROWS

# indices into the packed scalar parameter vector
P_L1, P_L2, P_LIMB_R, P_FOOT_R, P_TRIM, P_KP, P_KD, P_TAU_LIM, P_JI, P_JF, P_K, P_C, P_CT, P_DT, \
    P_CEIL, P_COLL, P_HX, P_HY, P_HZ = range(19)
N_PARAMS = 19


@njit(**HOT)
def quat_to_rot(qw, qx, qy, qz, out):
    out[0, 0] = 1 - 2 * (qy * qy + qz * qz)
    out[0, 1] = 2 * (qx * qy - qz * qw)
    out[0, 2] = 2 * (qx * qz + qy * qw)
    out[1, 0] = 2 * (qx * qy + qz * qw)
    out[1, 1] = 1 - 2 * (qx * qx + qz * qz)
    out[1, 2] = 2 * (qy * qz - qx * qw)
    out[2, 0] = 2 * (qx * qz - qy * qw)
    out[2, 1] = 2 * (qy * qz + qx * qw)
    out[2, 2] = 1 - 2 * (qx * qx + qy * qy)


@njit(**HOT)
def _add(nc, cp, cn, cd, cvk, cprox, px, py, pz, nx, ny, nz, d, vx, vy, vz, proxy):
    if nc >= cp.shape[0]:
        return nc
    cp[nc, 0] = px
    cp[nc, 1] = py
    cp[nc, 2] = pz
    cn[nc, 0] = nx
    cn[nc, 1] = ny
    cn[nc, 2] = nz
    cd[nc] = d
    cvk[nc, 0] = vx
    cvk[nc, 1] = vy
    cvk[nc, 2] = vz
    cprox[nc] = proxy
    return nc + 1


@njit(**HOT)
def _sphere_contacts(nc, c, r, vk, proxy, pyr, npyr, planes, tris, ceil, cp, cn, cd, cvk, cprox, nrm):
    m = CONTACT_MARGIN
    d = r - c[2]
    if d > -m:
        nc = _add(nc, cp, cn, cd, cvk, cprox, c[0], c[1], c[2] - r, 0.0, 0.0, 1.0, d,
                  vk[0], vk[1], vk[2], proxy)
    d = r - (ceil - c[2])
    if d > -m:
        nc = _add(nc, cp, cn, cd, cvk, cprox, c[0], c[1], c[2] + r, 0.0, 0.0, -1.0, d,
                  vk[0], vk[1], vk[2], proxy)
    reach = r + m
    for k in range(npyr):
        p = pyr[k]
        if abs(c[0] - p[0]) > 0.5 * p[3] + reach or abs(c[1] - p[1]) > 0.5 * p[4] + reach:
            continue
        if c[2] + reach < min(p[2], p[2] + p[5]) or c[2] - reach > max(p[2], p[2] + p[5]):
            continue
        sd = signed_distance_convex(c[0], c[1], c[2], planes[k], tris[k], nrm)
        d = r - sd
        if d > -m:
            nc = _add(nc, cp, cn, cd, cvk, cprox, c[0] - nrm[0] * sd, c[1] - nrm[1] * sd,
                      c[2] - nrm[2] * sd, nrm[0], nrm[1], nrm[2], d, vk[0], vk[1], vk[2], proxy)
    return nc


@njit(**HOT)
def _capsule_contacts(nc, a, b, va, vb, r, proxy, pyr, npyr, planes, tris, ceil, cp, cn, cd, cvk, cprox,
                      nrm, star):
    m = CONTACT_MARGIN
    # planes: the deepest point of a segment is an endpoint
    for end in range(2):
        pt = a if end == 0 else b
        vk = va if end == 0 else vb
        d = r - pt[2]
        if d > -m:
            nc = _add(nc, cp, cn, cd, cvk, cprox, pt[0], pt[1], pt[2] - r, 0.0, 0.0, 1.0, d,
                      vk[0], vk[1], vk[2], proxy)
        d = r - (ceil - pt[2])
        if d > -m:
            nc = _add(nc, cp, cn, cd, cvk, cprox, pt[0], pt[1], pt[2] + r, 0.0, 0.0, -1.0, d,
                      vk[0], vk[1], vk[2], proxy)
    reach = r + m
    lox = min(a[0], b[0]) - reach
    hix = max(a[0], b[0]) + reach
    loy = min(a[1], b[1]) - reach
    hiy = max(a[1], b[1]) + reach
    loz = min(a[2], b[2]) - reach
    hiz = max(a[2], b[2]) + reach
    sx = b[0] - a[0]
    sy = b[1] - a[1]
    sz = b[2] - a[2]
    ss = sx * sx + sy * sy + sz * sz
    for k in range(npyr):
        p = pyr[k]
        if hix < p[0] - 0.5 * p[3] or lox > p[0] + 0.5 * p[3]:
            continue
        if hiy < p[1] - 0.5 * p[4] or loy > p[1] + 0.5 * p[4]:
            continue
        if hiz < min(p[2], p[2] + p[5]) or loz > max(p[2], p[2] + p[5]):
            continue
        sd = segment_min_signed_distance(a, b, planes[k], tris[k], nrm, star)
        d = r - sd
        if d > -m:
            t = 0.0
            if ss > 0:
                t = ((star[0] - a[0]) * sx + (star[1] - a[1]) * sy + (star[2] - a[2]) * sz) / ss
                t = min(max(t, 0.0), 1.0)
            nc = _add(nc, cp, cn, cd, cvk, cprox, star[0] - nrm[0] * sd, star[1] - nrm[1] * sd,
                      star[2] - nrm[2] * sd, nrm[0], nrm[1], nrm[2], d,
                      (1 - t) * va[0] + t * vb[0], (1 - t) * va[1] + t * vb[1],
                      (1 - t) * va[2] + t * vb[2], proxy)
    return nc


@njit(**HOT)
def gather_contacts(pos, rot, q_old, q_new, prm, hips, pyr, npyr, planes, tris,
                    cp, cn, cd, cvk, cprox, wk):
    """Collect candidate contacts (depth > -margin) for one robot; ``wk`` is (WORK_ROWS, 3) scratch."""
    dt = prm[P_DT]
    l1 = prm[P_L1]
    l2 = prm[P_L2]
    ceil = prm[P_CEIL]
    h0 = wk[0:4]
    k0 = wk[4:8]
    f0 = wk[8:12]
    h1 = wk[12:16]
    k1 = wk[16:20]
    f1 = wk[20:24]
    leg_points_body(q_old, hips, l1, l2, h0, k0, f0)
    leg_points_body(q_new, hips, l1, l2, h1, k1, f1)
    nc = 0
    cw = wk[24]
    vk = wk[25]
    tb = wk[26]
    # world-frame position and kinematic velocity of body-frame points
    pa = wk[27]
    pb = wk[28]
    va = wk[29]
    vb = wk[30]
    e0 = wk[31]
    e1 = wk[32]
    # feet
    for leg in range(4):
        for m in range(3):
            cw[m] = pos[m] + rot[m, 0] * f1[leg, 0] + rot[m, 1] * f1[leg, 1] + rot[m, 2] * f1[leg, 2]
            tb[m] = (f1[leg, m] - f0[leg, m]) / dt
        for m in range(3):
            vk[m] = rot[m, 0] * tb[0] + rot[m, 1] * tb[1] + rot[m, 2] * tb[2]
        nc = _sphere_contacts(nc, cw, prm[P_FOOT_R], vk, -1, pyr, npyr, planes, tris, ceil,
                              cp, cn, cd, cvk, cprox, wk[34])
    # torso box
    he = wk[33]
    he[0] = prm[P_HX]
    he[1] = prm[P_HY]
    he[2] = prm[P_HZ]
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                for m in range(3):
                    cw[m] = pos[m] + rot[m, 0] * sx * he[0] + rot[m, 1] * sy * he[1] + rot[m, 2] * sz * he[2]
                d = -cw[2]
                if d > -CONTACT_MARGIN:
                    nc = _add(nc, cp, cn, cd, cvk, cprox, cw[0], cw[1], cw[2], 0.0, 0.0, 1.0, d,
                              0.0, 0.0, 0.0, 0)
                d = cw[2] - ceil
                if d > -CONTACT_MARGIN:
                    nc = _add(nc, cp, cn, cd, cvk, cprox, cw[0], cw[1], cw[2], 0.0, 0.0, -1.0, d,
                              0.0, 0.0, 0.0, 0)
    rad = math.sqrt(he[0] * he[0] + he[1] * he[1] + he[2] * he[2]) + CONTACT_MARGIN
    nrm = wk[34]
    for k in range(npyr):
        p = pyr[k]
        if abs(pos[0] - p[0]) > 0.5 * p[3] + rad or abs(pos[1] - p[1]) > 0.5 * p[4] + rad:
            continue
        if pos[2] + rad < min(p[2], p[2] + p[5]) or pos[2] - rad > max(p[2], p[2] + p[5]):
            continue
        d = obb_pyramid_penetration_ws(pos, he, rot, p, planes[k], nrm, cw, wk[36:])
        if d > -CONTACT_MARGIN:
            nc = _add(nc, cp, cn, cd, cvk, cprox, cw[0], cw[1], cw[2], nrm[0], nrm[1], nrm[2], d,
                      0.0, 0.0, 0.0, 0)
    # thighs (hip -> knee) and calves (knee -> trimmed end)
    r = prm[P_LIMB_R]
    for part in range(2):
        for leg in range(4):
            if part == 0:
                for m in range(3):
                    e0[m] = h0[leg, m]
                    e1[m] = h1[leg, m]
                    tb[m] = 0.0
            else:
                calf_capsule_end(k0[leg], f0[leg], prm[P_TRIM], e0)
                calf_capsule_end(k1[leg], f1[leg], prm[P_TRIM], e1)
                for m in range(3):
                    tb[m] = e1[m] - e0[m]
            # endpoint a
            src1 = h1 if part == 0 else k1
            src0 = h0 if part == 0 else k0
            for m in range(3):
                pa[m] = pos[m] + rot[m, 0] * src1[leg, 0] + rot[m, 1] * src1[leg, 1] + rot[m, 2] * src1[leg, 2]
            for m in range(3):
                va[m] = (rot[m, 0] * (src1[leg, 0] - src0[leg, 0]) + rot[m, 1] * (src1[leg, 1] - src0[leg, 1])
                         + rot[m, 2] * (src1[leg, 2] - src0[leg, 2])) / dt
            # endpoint b
            if part == 0:
                for m in range(3):
                    pb[m] = pos[m] + rot[m, 0] * k1[leg, 0] + rot[m, 1] * k1[leg, 1] + rot[m, 2] * k1[leg, 2]
                for m in range(3):
                    vb[m] = (rot[m, 0] * (k1[leg, 0] - k0[leg, 0]) + rot[m, 1] * (k1[leg, 1] - k0[leg, 1])
                             + rot[m, 2] * (k1[leg, 2] - k0[leg, 2])) / dt
            else:
                for m in range(3):
                    pb[m] = pos[m] + rot[m, 0] * e1[0] + rot[m, 1] * e1[1] + rot[m, 2] * e1[2]
                for m in range(3):
                    vb[m] = (rot[m, 0] * tb[0] + rot[m, 1] * tb[1] + rot[m, 2] * tb[2]) / dt
            nc = _capsule_contacts(nc, pa, pb, va, vb, r, 1 + 4 * part + leg, pyr, npyr, planes, tris,
                                   ceil, cp, cn, cd, cvk, cprox, wk[34], wk[35])
    return nc


@njit(**HOT)
def _solve6(a, b, x, m):
    # m is (6, 7) scratch for the augmented matrix
    for i in range(6):
        for j in range(6):
            m[i, j] = a[i, j]
        m[i, 6] = b[i]
    for col in range(6):
        piv = col
        best = abs(m[col, col])
        for r in range(col + 1, 6):
            if abs(m[r, col]) > best:
                best = abs(m[r, col])
                piv = r
        if piv != col:
            for j in range(7):
                tmp = m[col, j]
                m[col, j] = m[piv, j]
                m[piv, j] = tmp
        inv = 1.0 / m[col, col]
        for r in range(col + 1, 6):
            f = m[r, col] * inv
            if f != 0.0:
                for j in range(col, 7):
                    m[r, j] -= f * m[col, j]
    for i in range(5, -1, -1):
        s = m[i, 6]
        for j in range(i + 1, 6):
            s -= m[i, j] * x[j]
        x[i] = s / m[i, i]


@njit(**HOT)
def _add_contact_rows(A, b, rx, ry, rz, D, f0):
    # A += J^T D J, b += J^T f0 with J = [I, -[r]x]
    s01, s02, s10, s12, s20, s21 = -rz, ry, rz, -rx, -ry, rx
    for i in range(3):
        d0 = D[i, 0]
        d1 = D[i, 1]
        d2 = D[i, 2]
        # row i of D S
        A[i, 3] -= d1 * s10 + d2 * s20
        A[i, 4] -= d0 * s01 + d2 * s21
        A[i, 5] -= d0 * s02 + d1 * s12
        A[i, 0] += d0
        A[i, 1] += d1
        A[i, 2] += d2
    for j in range(3):
        c0 = D[0, j]
        c1 = D[1, j]
        c2 = D[2, j]
        # column j of S D
        A[3, j] += s01 * c1 + s02 * c2
        A[4, j] += s10 * c0 + s12 * c2
        A[5, j] += s20 * c0 + s21 * c1
    # S D S via rows of S D
    for i in range(3):
        if i == 0:
            a0, a1, a2 = 0.0, s01, s02
        elif i == 1:
            a0, a1, a2 = s10, 0.0, s12
        else:
            a0, a1, a2 = s20, s21, 0.0
        r0 = a0 * D[0, 0] + a1 * D[1, 0] + a2 * D[2, 0]
        r1 = a0 * D[0, 1] + a1 * D[1, 1] + a2 * D[2, 1]
        r2 = a0 * D[0, 2] + a1 * D[1, 2] + a2 * D[2, 2]
        A[3 + i, 3] -= r1 * s10 + r2 * s20
        A[3 + i, 4] -= r0 * s01 + r2 * s21
        A[3 + i, 5] -= r0 * s02 + r1 * s12
    for i in range(3):
        b[i] += f0[i]
    b[3] += ry * f0[2] - rz * f0[1]
    b[4] += rz * f0[0] - rx * f0[2]
    b[5] += rx * f0[1] - ry * f0[0]


@njit(**JIT)
def physics_kernel(lo, hi, active, pos, quat, vel, omega, q, qd, qdd, tau, q_target,
                   mass, inertia, motor, calib, mu, restitution, gravity,
                   pyr, npyr, planes, tris, hips, lower, upper, prm, decimation,
                   collided, failed):
    """Advance envs [lo, hi) by ``decimation`` substeps; writes collision and failure flags."""
    cvec = np.empty((4, MAX_CONTACTS, 3))
    cscal = np.empty((3, MAX_CONTACTS))
    cflag = np.empty((2, MAX_CONTACTS), dtype=np.bool_)
    cprox = np.empty(MAX_CONTACTS, dtype=np.int64)
    m33 = np.empty((3, 3, 3))
    v3 = np.empty((4, 3))
    m66 = np.empty((2, 6, 6))
    m67 = np.empty((6, 7))
    v6 = np.empty((3, 6))
    q_old = np.empty(12)
    wk = np.empty((WORK_ROWS, 3))
    _physics_core(lo, hi, active, pos, quat, vel, omega, q, qd, qdd, tau, q_target,
                  mass, inertia, motor, calib, mu, restitution, gravity,
                  pyr, npyr, planes, tris, hips, lower, upper, prm, decimation, collided, failed,
                  cvec[0], cvec[1], cvec[2], cvec[3], cscal[0], cscal[1], cscal[2], cflag[0], cflag[1],
                  cprox, m33[0], m33[1], m33[2], v3[0], v3[1], v3[2], m66[0], m66[1],
                  m67, v6[0], v6[1], v6[2], q_old, wk)


@njit(**HOT)
def _physics_core(lo, hi, active, pos, quat, vel, omega, q, qd, qdd, tau, q_target,
                  mass, inertia, motor, calib, mu, restitution, gravity,
                  pyr, npyr, planes, tris, hips, lower, upper, prm, decimation, collided, failed,
                  cp, cn, cvk, sdir, cd, kdv, ctv, act, slide,
                  cprox, rot, iw, D, f0, G, lw, A0, A, M, b0, b, u, q_old, wk):
    dt = prm[P_DT]
    k_s = prm[P_K]
    c_d = prm[P_C]
    c_t = prm[P_CT]
    coll = prm[P_COLL]
    for e in range(lo, hi):
        if not active[e]:
            continue
        for m in range(collided.shape[1]):
            collided[e, m] = 0
        for sub in range(decimation):
            # joint servos
            for j in range(12):
                qm = q[e, j] + calib[e, j]
                t = prm[P_KP] * (q_target[e, j] - qm) - prm[P_KD] * qd[e, j]
                t = min(max(t, -prm[P_TAU_LIM]), prm[P_TAU_LIM]) * motor[e]
                acc = (t - prm[P_JF] * qd[e, j]) / prm[P_JI]
                q_old[j] = q[e, j]
                v = qd[e, j] + dt * acc
                qn = q[e, j] + dt * v
                if qn < lower[j]:
                    qn = lower[j]
                    v = 0.0
                elif qn > upper[j]:
                    qn = upper[j]
                    v = 0.0
                qdd[e, j] = (v - qd[e, j]) / dt
                qd[e, j] = v
                q[e, j] = qn
                tau[e, j] = t
            quat_to_rot(quat[e, 0], quat[e, 1], quat[e, 2], quat[e, 3], rot)
            nc = gather_contacts(pos[e], rot, q_old, q[e], prm, hips, pyr[e], npyr[e], planes[e], tris[e],
                                 cp, cn, cd, cvk, cprox, wk)
            for c in range(nc):
                if cprox[c] >= 0 and cd[c] > coll:
                    collided[e, cprox[c]] = 1
            # base dynamics
            m_e = mass[e]
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += rot[i, k] * inertia[e, k] * rot[j, k]
                    iw[i, j] = acc
            for i in range(6):
                for j in range(6):
                    A0[i, j] = 0.0
            for i in range(3):
                A0[i, i] = m_e / dt
                for j in range(3):
                    A0[3 + i, 3 + j] = iw[i, j] / dt
            for i in range(3):
                lw[i] = iw[i, 0] * omega[e, 0] + iw[i, 1] * omega[e, 1] + iw[i, 2] * omega[e, 2]
            for i in range(3):
                b0[i] = m_e / dt * vel[e, i] + m_e * gravity[e, i]
                b0[3 + i] = lw[i] / dt
            b0[3] -= omega[e, 1] * lw[2] - omega[e, 2] * lw[1]
            b0[4] -= omega[e, 2] * lw[0] - omega[e, 0] * lw[2]
            b0[5] -= omega[e, 0] * lw[1] - omega[e, 1] * lw[0]
            for c in range(nc):
                act[c] = True
                slide[c] = False
                # relative normal velocity at the current state decides restitution damping
                rx = cp[c, 0] - pos[e, 0]
                ry = cp[c, 1] - pos[e, 1]
                rz = cp[c, 2] - pos[e, 2]
                vpx = vel[e, 0] + omega[e, 1] * rz - omega[e, 2] * ry + cvk[c, 0]
                vpy = vel[e, 1] + omega[e, 2] * rx - omega[e, 0] * rz + cvk[c, 1]
                vpz = vel[e, 2] + omega[e, 0] * ry - omega[e, 1] * rx + cvk[c, 2]
                vn = vpx * cn[c, 0] + vpy * cn[c, 1] + vpz * cn[c, 2]
                if cd[c] > 0.0:
                    damp = c_d * (1.0 - restitution[e]) if vn > 0.0 else c_d
                    kdv[c] = damp + k_s * dt
                    ctv[c] = c_t
                else:
                    # predictive contact: spring only, engages if it would penetrate by step end
                    kdv[c] = k_s * dt
                    ctv[c] = 0.0
            for it in range(8):
                for i in range(6):
                    b[i] = b0[i]
                    for j in range(6):
                        A[i, j] = A0[i, j]
                for c in range(nc):
                    if not act[c]:
                        continue
                    n0, n1, n2 = cn[c, 0], cn[c, 1], cn[c, 2]
                    vkn = n0 * cvk[c, 0] + n1 * cvk[c, 1] + n2 * cvk[c, 2]
                    a_c = k_s * cd[c] - kdv[c] * vkn
                    if slide[c]:
                        G[0] = n0 + mu[e] * sdir[c, 0]
                        G[1] = n1 + mu[e] * sdir[c, 1]
                        G[2] = n2 + mu[e] * sdir[c, 2]
                    else:
                        G[0], G[1], G[2] = n0, n1, n2
                    nn = (n0, n1, n2)
                    for i in range(3):
                        for j in range(3):
                            D[i, j] = kdv[c] * G[i] * nn[j]
                        f0[i] = G[i] * a_c
                    if not slide[c] and ctv[c] > 0.0:
                        for i in range(3):
                            for j in range(3):
                                pij = (1.0 if i == j else 0.0) - nn[i] * nn[j]
                                D[i, j] += ctv[c] * pij
                                f0[i] -= ctv[c] * pij * cvk[c, j]
                    _add_contact_rows(A, b, cp[c, 0] - pos[e, 0], cp[c, 1] - pos[e, 1], cp[c, 2] - pos[e, 2], D, f0)
                _solve6(A, b, u, M)
                changed = False
                for c in range(nc):
                    if not act[c]:
                        continue
                    rx = cp[c, 0] - pos[e, 0]
                    ry = cp[c, 1] - pos[e, 1]
                    rz = cp[c, 2] - pos[e, 2]
                    vpx = u[0] + u[4] * rz - u[5] * ry + cvk[c, 0]
                    vpy = u[1] + u[5] * rx - u[3] * rz + cvk[c, 1]
                    vpz = u[2] + u[3] * ry - u[4] * rx + cvk[c, 2]
                    vn = vpx * cn[c, 0] + vpy * cn[c, 1] + vpz * cn[c, 2]
                    fn = k_s * cd[c] - kdv[c] * vn
                    if fn < 0.0:
                        act[c] = False
                        changed = True
                        continue
                    if not slide[c] and ctv[c] > 0.0:
                        tx = -ctv[c] * (vpx - vn * cn[c, 0])
                        ty = -ctv[c] * (vpy - vn * cn[c, 1])
                        tz = -ctv[c] * (vpz - vn * cn[c, 2])
                        ft = math.sqrt(tx * tx + ty * ty + tz * tz)
                        if ft > mu[e] * fn and ft > 0.0:
                            slide[c] = True
                            sdir[c, 0] = tx / ft
                            sdir[c, 1] = ty / ft
                            sdir[c, 2] = tz / ft
                            changed = True
                if not changed:
                    break
            for i in range(3):
                vel[e, i] = u[i]
                omega[e, i] = u[3 + i]
                pos[e, i] += dt * u[i]
            # orientation: q <- exp(w dt) * q with world-frame w
            wn = math.sqrt(u[3] * u[3] + u[4] * u[4] + u[5] * u[5])
            if wn > 0.0:
                half = 0.5 * wn * dt
                s = math.sin(half) / wn
                dw, dx, dy, dz = math.cos(half), u[3] * s, u[4] * s, u[5] * s
                w0, x0, y0, z0 = quat[e, 0], quat[e, 1], quat[e, 2], quat[e, 3]
                nw = dw * w0 - dx * x0 - dy * y0 - dz * z0
                nx = dw * x0 + dx * w0 + dy * z0 - dz * y0
                ny = dw * y0 - dx * z0 + dy * w0 + dz * x0
                nz = dw * z0 + dx * y0 - dy * x0 + dz * w0
                inv = 1.0 / math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
                quat[e, 0] = nw * inv
                quat[e, 1] = nx * inv
                quat[e, 2] = ny * inv
                quat[e, 3] = nz * inv
            ok = True
            for i in range(3):
                if not (math.isfinite(pos[e, i]) and math.isfinite(vel[e, i]) and math.isfinite(omega[e, i])):
                    ok = False
            for i in range(4):
                if not math.isfinite(quat[e, i]):
                    ok = False
            if not ok:
                failed[e] = 1
                break


@njit(**JIT)
def energy_kernel(pos, quat, vel, omega, q, mass, inertia, gravity, prm, hips, pyr, npyr, planes, tris):
    """Kinetic + gravitational + contact-spring energy of one robot."""
    cp = np.empty((MAX_CONTACTS, 3))
    cn = np.empty((MAX_CONTACTS, 3))
    cd = np.empty(MAX_CONTACTS)
    cvk = np.empty((MAX_CONTACTS, 3))
    cprox = np.empty(MAX_CONTACTS, dtype=np.int64)
    wk = np.empty((WORK_ROWS, 3))
    rot = np.empty((3, 3))
    quat_to_rot(quat[0], quat[1], quat[2], quat[3], rot)
    nc = gather_contacts(pos, rot, q, q, prm, hips, pyr, npyr, planes, tris, cp, cn, cd, cvk, cprox, wk)
    e = 0.5 * mass * (vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2)
    # body-frame angular velocity
    for k in range(3):
        wb = rot[0, k] * omega[0] + rot[1, k] * omega[1] + rot[2, k] * omega[2]
        e += 0.5 * inertia[k] * wb * wb
    e -= mass * (gravity[0] * pos[0] + gravity[1] * pos[1] + gravity[2] * pos[2])
    for c in range(nc):
        if cd[c] > 0.0:
            e += 0.5 * prm[P_K] * cd[c] * cd[c]
    return e


@njit(**JIT)
def proxy_depths_kernel(pos, quat, q, prm, hips, pyr, npyr, planes, tris, out):
    """Deepest penetration per proxy (torso, thighs, calves) at the current state."""
    cp = np.empty((MAX_CONTACTS, 3))
    cn = np.empty((MAX_CONTACTS, 3))
    cd = np.empty(MAX_CONTACTS)
    cvk = np.empty((MAX_CONTACTS, 3))
    cprox = np.empty(MAX_CONTACTS, dtype=np.int64)
    wk = np.empty((WORK_ROWS, 3))
    rot = np.empty((3, 3))
    quat_to_rot(quat[0], quat[1], quat[2], quat[3], rot)
    nc = gather_contacts(pos, rot, q, q, prm, hips, pyr, npyr, planes, tris, cp, cn, cd, cvk, cprox, wk)
    for m in range(out.shape[0]):
        out[m] = 0.0
    for c in range(nc):
        if cprox[c] >= 0 and cd[c] > out[cprox[c]]:
            out[cprox[c]] = cd[c]

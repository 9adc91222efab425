import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burrow.geometry import (Capsule, Obb, Pose6, Pyramid, TriMesh, capsule_mesh_penetration, ceiling_height,
                             floor_height, obb_intersects_mesh, pyramid_to_mesh, rotation_matrix,
                             surface_height_at, wrap_angle)
from burrow.world import generate_env

import oracles

UNIT = Pyramid(0, 0, 0, 2, 2, 1)


def random_pyramid(rng, ceiling=None):
    ceiling = rng.random() < 0.5 if ceiling is None else ceiling
    h = rng.uniform(0.15, 0.35)
    return Pyramid(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.5 if ceiling else 0.0,
                   rng.uniform(0.2, 0.4), rng.uniform(0.2, 0.4), -h if ceiling else h)


def random_box(rng, near):
    center = np.array([near[0] + rng.uniform(-0.35, 0.35), near[1] + rng.uniform(-0.35, 0.35),
                       rng.uniform(-0.05, 0.55)])
    he = rng.uniform(0.02, 0.2, 3)
    rot = rotation_matrix(*rng.uniform(-math.pi, math.pi, 3))
    return center, he, rot


class TestPyramidMesh:
    def test_unit_pyramid_vertices(self):
        m = pyramid_to_mesh(UNIT)
        verts = {tuple(np.round(v, 12)) for v in m.vertices}
        assert verts == {(0, 0, 1), (1, 1, 0), (1, -1, 0), (-1, 1, 0), (-1, -1, 0)}
        assert m.triangles.shape == (6, 3)

    def test_ceiling_pyramid_apex_below_base(self):
        m = pyramid_to_mesh(Pyramid(0, 0, 0.5, 0.3, 0.3, -0.2))
        apex = m.vertices[np.argmin(m.vertices[:, 2])]
        assert apex == pytest.approx([0, 0, 0.3], abs=1e-15)
        assert np.all(m.vertices[m.vertices[:, 2] > 0.4][:, 2] == 0.5)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 1.0), st.booleans())
    def test_surface_area_closed_form(self, l, w, h, ceiling):
        m = pyramid_to_mesh(Pyramid(0.1, -0.2, 0.5 if ceiling else 0.0, l, w, -h if ceiling else h))
        # two lateral triangle pairs with slant heights over each base edge, plus the base
        expected = l * w + l * math.hypot(h, w / 2) + w * math.hypot(h, l / 2)
        assert m.area() == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("hp", [0.3, -0.3])
    def test_watertight_and_outward(self, hp):
        m = pyramid_to_mesh(Pyramid(0.2, 0.1, 0.5 if hp < 0 else 0.0, 0.3, 0.25, hp))
        edges = {}
        for tri in m.triangles:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = tuple(sorted((tri[a], tri[b])))
                edges[key] = edges.get(key, 0) + 1
        # 8 pyramid edges plus the base diagonal
        assert len(edges) == 9 and set(edges.values()) == {2}
        centroid = m.vertices.mean(axis=0)
        planes = m.face_planes()
        assert np.all(planes[:, :3] @ centroid < planes[:, 3])

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            Pyramid(0, 0, 0, math.nan, 1, 1)
        with pytest.raises(ValueError):
            Pyramid(0, 0, 0, 1, 1, 0)
        with pytest.raises(ValueError):
            Pyramid(0, 0, 0, -1, 1, 1)

    def test_degenerate_triangle_rejected(self):
        with pytest.raises(ValueError):
            TriMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.array([[0, 1, 2]]))
        with pytest.raises(ValueError):
            TriMesh(np.eye(3), np.array([[0, 1, 3]]))


class TestSurfaceHeight:
    def test_examples(self):
        assert surface_height_at(UNIT, 0, 0) == 1.0
        assert surface_height_at(UNIT, 1, 0) == 0.0
        assert surface_height_at(UNIT, 0.5, 0) == 0.5
        assert surface_height_at(UNIT, 1.01, 0) is None

    def test_face_interpolation_matches_raycast(self):
        tris = oracles.pyramid_triangles(UNIT.as_array())
        for x, y in [(0.5, 0), (0.3, -0.6), (-0.25, 0.1), (0.9, 0.9)]:
            assert surface_height_at(UNIT, x, y) == pytest.approx(max(oracles.vertical_hits(tris, x, y)), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_boundary_and_range(self, x, y):
        z = surface_height_at(UNIT, x, y)
        assert 0.0 <= z <= 1.0
        if max(abs(x), abs(y)) == 1:
            assert z == 0.0

    def test_continuity_across_face_seams(self):
        for t in np.linspace(-0.99, 0.99, 41):
            a = surface_height_at(UNIT, t, t + 1e-10)
            b = surface_height_at(UNIT, t + 1e-10, t)
            assert abs(a - b) < 1e-9


class TestFieldHeights:
    def test_bare_ground(self):
        assert floor_height([], 0.3, -0.2) == 0.0
        assert ceiling_height([], 0.3, -0.2) == 0.5

    def test_apex_values(self):
        assert floor_height([Pyramid(0, 0, 0, 0.3, 0.3, 0.27)], 0, 0) == 0.27
        assert ceiling_height([Pyramid(0, 0, 0.5, 0.3, 0.3, -0.3)], 0, 0) == pytest.approx(0.2, abs=1e-15)

    def test_overlapping_fields_match_raycast(self):
        rng = np.random.default_rng(11)
        floor = [Pyramid(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0, 0.4, 0.35, rng.uniform(0.15, 0.35))
                 for _ in range(3)]
        ceil = [Pyramid(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.5, 0.4, 0.3, -rng.uniform(0.15, 0.35))
                for _ in range(3)]
        arr = [p.as_array() for p in floor + ceil]
        for x, y in rng.uniform(-0.3, 0.3, (400, 2)):
            assert floor_height(floor, x, y) == pytest.approx(oracles.floor_height_raycast(arr, x, y), abs=1e-9)
            assert ceiling_height(ceil, x, y) == pytest.approx(oracles.ceiling_height_raycast(arr, x, y), abs=1e-9)

    def test_generated_env_bounds_and_overlap_safe(self):
        # floor and ceiling may interpenetrate; queries must still return sane values
        rng = np.random.default_rng(4)
        for seed in range(10):
            e = generate_env(seed, "hard")
            fl = [p for row in e.floor_pyramids for p in row]
            cl = [p for row in e.ceiling_pyramids for p in row]
            for x, y in rng.uniform([-1.6, -0.9], [1.6, 0.9], (200, 2)):
                assert floor_height(fl, x, y) >= 0.0
                assert ceiling_height(cl, x, y) <= 0.5


class TestObbMesh:
    def test_far_box(self):
        m = pyramid_to_mesh(UNIT)
        assert not obb_intersects_mesh(Obb([10.0, 0, 0], [0.2, 0.2, 0.2]), m)

    def test_box_inside_pyramid(self):
        m = pyramid_to_mesh(Pyramid(0, 0, 0, 1, 1, 1))
        assert obb_intersects_mesh(Obb([0, 0, 0.2], [0.01, 0.01, 0.01]), m)

    def test_pyramid_inside_box(self):
        m = pyramid_to_mesh(Pyramid(0, 0, 0, 0.2, 0.2, 0.2))
        assert obb_intersects_mesh(Obb([0, 0, 0.1], [1, 1, 1]), m)

    def test_touching_counts(self):
        m = pyramid_to_mesh(Pyramid(0, 0, 0, 1, 1, 0.5))
        assert obb_intersects_mesh(Obb([0, 0, 0.6], [0.1, 0.1, 0.1]), m)
        assert not obb_intersects_mesh(Obb([0, 0, 0.6 + 1e-6], [0.1, 0.1, 0.1]), m)

    def test_obb_invariants(self):
        with pytest.raises(ValueError):
            Obb([0, 0, 0], [0.1, 0, 0.1])
        with pytest.raises(ValueError):
            Obb([0, 0, 0], [0.1, 0.1, 0.1], np.diag([1.0, 1.0, 1.1]))

    def test_agrees_with_lp_and_sampling(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(150):
            p = random_pyramid(rng)
            c, he, rot = random_box(rng, (p.xp, p.yp))
            depth = oracles.overlap_depth(*oracles.box_halfspaces(c, he, rot), *oracles.pyramid_halfspaces(p.as_array()))
            if abs(depth) < 1e-3:
                continue
            got = obb_intersects_mesh(Obb(c, he, rot), pyramid_to_mesh(p))
            assert got == (depth > 0)
            assert got == oracles.box_pyramid_sampled(c, he, rot, p.as_array(), rng, n=20_000)
            checked += 1
        assert checked > 100

    def test_rigid_transform_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            p = random_pyramid(rng)
            c, he, rot = random_box(rng, (p.xp, p.yp))
            m = pyramid_to_mesh(p)
            base = obb_intersects_mesh(Obb(c, he, rot), m)
            depth = oracles.overlap_depth(*oracles.box_halfspaces(c, he, rot),
                                          *oracles.pyramid_halfspaces(p.as_array()))
            if abs(depth) < 1e-9:
                continue
            r = rotation_matrix(*rng.uniform(-math.pi, math.pi, 3))
            t = rng.uniform(-3, 3, 3)
            moved = TriMesh(m.vertices @ r.T + t, m.triangles)
            assert obb_intersects_mesh(Obb(r @ c + t, he, r @ rot), moved) == base


class TestCapsule:
    def test_far(self):
        d, _ = capsule_mesh_penetration(Capsule([5, 5, 5], [5, 5, 6], 0.02), pyramid_to_mesh(UNIT))
        assert d == 0.0

    def test_axis_end_below_horizontal_face(self):
        # ceiling pyramid: base face at z = 0.5, solid hangs below it
        m = pyramid_to_mesh(Pyramid(0, 0, 0.5, 0.4, 0.4, -0.35))
        d, n = capsule_mesh_penetration(Capsule([0, 0, 0.49], [0, 0, 0.7], 0.02), m)
        assert d == pytest.approx(0.03, abs=1e-12)
        assert n == pytest.approx([0, 0, 1], abs=1e-12)

    def test_random_against_sampling(self):
        rng = np.random.default_rng(99)
        worst = 0.0
        hits = 0
        for _ in range(60):
            p = random_pyramid(rng)
            arr = p.as_array()
            a = np.array([p.xp, p.yp, 0.5 * (p.zp + p.zp + p.hp)]) + rng.uniform(-0.15, 0.15, 3)
            b = a + rng.uniform(-0.2, 0.2, 3)
            r = rng.uniform(0.01, 0.04)
            d, n = capsule_mesh_penetration(Capsule(a, b, r), pyramid_to_mesh(p))
            ref = oracles.capsule_depth_sampled(a, b, r, arr, n=20_000)
            worst = max(worst, abs(d - ref))
            if d > 0:
                hits += 1
                assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
        assert hits > 30
        assert worst < 1e-6


class TestPoseAngles:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50))
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)

    def test_pose_wraps_and_rotation_orthonormal(self):
        p = Pose6(0, 0, 0.3, 7.0, -4.0, math.pi * 3)
        assert p.psi == pytest.approx(math.pi)
        r = p.rotation
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
        assert r == pytest.approx(oracles.rot_zyx(p.phi, p.theta, p.psi), abs=1e-15)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import (inside_box_oracle, make_scene, mc_bev_iou, mc_iou_3d, overlapping_pair,
                      random_box, uniform_points)
from lidarssl.errors import DegenerateBox, InvalidScene, InvalidTransform
from lidarssl.geometry import (Box3D, PointCloud, Provenance, Rect, Scene, Transform2D,
                               apply_transform, bev_iou, iou_3d, iou_matrix, normalize_yaw,
                               points_in_box, points_in_box_mask, visible_part)

finite = st.floats(-50, 50, allow_nan=False)


class TestTypes:
    def test_yaw_normalized_to_half_open_interval(self):
        assert normalize_yaw(math.pi) == -math.pi
        assert Box3D(0, 0, 0, 1, 1, 1, yaw=3 * math.pi).yaw == pytest.approx(-math.pi)
        for y in np.linspace(-20, 20, 401):
            v = normalize_yaw(y)
            assert -math.pi <= v < math.pi

    @pytest.mark.parametrize("dims", [(0, 1, 1), (1, -1, 1), (1, 1, float("nan"))])
    def test_degenerate_box_rejected(self, dims):
        with pytest.raises(DegenerateBox):
            Box3D(0, 0, 0, *dims)

    def test_scene_score_invariants(self):
        cloud = PointCloud.empty(Rect(-1, 1, -1, 1))
        with pytest.raises(InvalidScene):
            Scene(cloud, (Box3D(0, 0, 0, 1, 1, 1, score=0.5),), Provenance.LABELED)
        with pytest.raises(InvalidScene):
            Scene(cloud, (Box3D(0, 0, 0, 1, 1, 1),), Provenance.PSEUDO_LABELED)
        Scene(cloud, (Box3D(0, 0, 0, 1, 1, 1, score=0.5),), Provenance.PSEUDO_LABELED)

    def test_rect_half_open(self):
        r = Rect(0, 1, 0, 1)
        assert r.contains_point(0, 0)
        assert not r.contains_point(1, 0.5)
        assert not r.contains_point(0.5, 1)

    def test_non_finite_transform_rejected(self):
        with pytest.raises(InvalidTransform):
            Transform2D(rotation=float("inf"))
        with pytest.raises(InvalidTransform):
            Transform2D(scale=0.0)


class TestTransform:
    def test_identity_returns_scene_unchanged(self, rng):
        s = make_scene(uniform_points(rng, 100), [random_box(rng)])
        out = apply_transform(s, Transform2D())
        assert out.cloud.points.tobytes() == s.cloud.points.tobytes()
        assert out.boxes == s.boxes

    def test_quarter_turn_is_exact(self):
        s = make_scene([[1.0, 0.0, 0.0, 0.5]])
        out = apply_transform(s, Transform2D(rotation=math.pi / 2))
        np.testing.assert_allclose(out.cloud.points[0], [0.0, 1.0, 0.0, 0.5], atol=1e-9)

    def test_rotation_preserves_radius_and_pairwise_distance(self, rng):
        pts = uniform_points(rng, 1000)
        s = make_scene(pts)
        t = Transform2D(rotation=float(rng.uniform(-7, 7)))
        out = apply_transform(s, t).cloud.points
        r0 = [math.hypot(x, y) for x, y in pts[:, :2]]
        r1 = [math.hypot(x, y) for x, y in out[:, :2]]
        np.testing.assert_allclose(r1, r0, atol=1e-9)
        i, j = rng.integers(0, 1000, (2, 200))
        np.testing.assert_allclose(np.linalg.norm(out[i, :3] - out[j, :3], axis=1),
                                   np.linalg.norm(pts[i, :3] - pts[j, :3], axis=1), atol=1e-9)

    def test_order_is_flip_rotate_scale_translate(self):
        t = Transform2D(rotation=0.3, flip_x=True, scale=2.0, translation=(5.0, -1.0))
        x, y = 1.5, -0.7
        fx = -x  # flip
        rx = math.cos(0.3) * fx - math.sin(0.3) * y
        ry = math.sin(0.3) * fx + math.cos(0.3) * y
        expected = (2 * rx + 5.0, 2 * ry - 1.0)
        np.testing.assert_allclose(t.apply_xy(np.array([[x, y]]))[0], expected, atol=1e-12)

    def test_dims_and_z_scale_intensity_untouched(self):
        s = make_scene([[1, 2, 3, 0.25]], [Box3D(1, 2, 3, 4, 2, 1.5, 0.2)])
        out = apply_transform(s, Transform2D(scale=1.5, rotation=0.4))
        assert out.cloud.points[0, 2] == pytest.approx(4.5)
        assert out.cloud.points[0, 3] == 0.25
        b = out.boxes[0]
        assert (b.l, b.w, b.h, b.cz) == pytest.approx((6, 3, 2.25, 4.5))
        assert b.yaw == pytest.approx(0.6)

    @pytest.mark.parametrize("fx,fy", [(True, False), (False, True), (True, True)])
    def test_flipped_box_keeps_its_points(self, fx, fy, rng):
        # yaw under flips is validated by containment, the quantity it exists for
        box = Box3D(3, 1, 0, 4, 1.5, 2, 0.7)
        pts = uniform_points(rng, 4000, Rect(-2, 8, -4, 6), z=(-1, 1))
        s = make_scene(pts, [box])
        t = Transform2D(rotation=0.25, flip_x=fx, flip_y=fy, translation=(2, -3))
        out = apply_transform(s, t)
        assert np.array_equal(points_in_box_mask(pts, box),
                              points_in_box_mask(out.cloud.points, out.boxes[0]))

    def test_range_is_tight_bound_of_corners(self):
        s = make_scene(np.zeros((0, 4)), rng=Rect(0, 2, 0, 1))
        out = apply_transform(s, Transform2D(rotation=math.pi / 2))
        assert out.cloud.range == pytest.approx(Rect(-1, 0, 0, 2))

    @given(rot=st.floats(-10, 10), fx=st.booleans(), fy=st.booleans(),
           tx=finite, ty=finite, scale=st.floats(0.2, 5))
    def test_inverse_round_trip(self, rot, fx, fy, tx, ty, scale):
        t = Transform2D(rot, fx, fy, scale, (tx, ty))
        xy = np.array([[1.0, 2.0], [-30.0, 4.5], [0.0, 0.0]])
        np.testing.assert_allclose(t.inverse().apply_xy(t.apply_xy(xy)), xy, atol=1e-6)
        yaw = 0.9
        back = t.inverse().apply_yaw(t.apply_yaw(yaw))
        assert math.isclose(math.cos(back), math.cos(yaw), abs_tol=1e-9)
        assert math.isclose(math.sin(back), math.sin(yaw), abs_tol=1e-9)

    @given(a=st.tuples(st.floats(-4, 4), st.booleans(), st.booleans(), finite, finite),
           b=st.tuples(st.floats(-4, 4), st.booleans(), st.booleans(), finite, finite))
    def test_composition_matches_sequential_application(self, a, b):
        ta = Transform2D(a[0], a[1], a[2], 1.0, (a[3], a[4]))
        tb = Transform2D(b[0], b[1], b[2], 1.0, (b[3], b[4]))
        xy = np.array([[1.0, -2.0], [7.0, 3.0]])
        np.testing.assert_allclose(ta.then(tb).apply_xy(xy), tb.apply_xy(ta.apply_xy(xy)), atol=1e-9)
        box = Box3D(1, 2, 0, 3, 1, 1, 0.4)
        y1 = ta.then(tb).apply_yaw(box.yaw)
        y2 = tb.apply_yaw(ta.apply_yaw(box.yaw))
        assert math.isclose(math.cos(y1 - y2), 1.0, abs_tol=1e-9)


class TestContainment:
    def test_center_of_unit_box(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 0.0, 1.0]]), Rect(-1, 1, -1, 1))
        assert list(points_in_box(cloud, Box3D(0, 0, 0, 1, 1, 1))) == [0]

    def test_rotated_corner_epsilon_outside(self):
        box = Box3D(0, 0, 0, 2, 2, 2, math.pi / 4)
        corner = np.array([math.sqrt(2), 0.0])  # local (1, -1) rotated by 45 degrees
        eps = 1e-6
        pts = np.array([[corner[0] + eps, 0.0, 0.0, 0], [corner[0] - eps, 0.0, 0.0, 0]])
        assert points_in_box_mask(pts, box).tolist() == [False, True]

    def test_matches_brute_force_oracle(self, rng):
        pts = uniform_points(rng, 500, Rect(-10, 10, -10, 10), z=(-2, 2))
        for _ in range(50):
            box = random_box(rng)
            mask = points_in_box_mask(pts, box)
            oracle = [inside_box_oracle(x, y, z, box) for x, y, z, _ in pts]
            assert mask.tolist() == oracle

    def test_boundary_half_open(self):
        box = Box3D(0, 0, 0, 2, 2, 2)
        pts = np.array([[-1, 0, 0, 0], [1, 0, 0, 0], [0, -1, 0, 0], [0, 1, 0, 0],
                        [0, 0, -1, 0], [0, 0, 1, 0]], dtype=float)
        assert points_in_box_mask(pts, box).tolist() == [True, False, True, False, True, False]

    def test_rigid_invariance(self, rng):
        pts = uniform_points(rng, 2000, Rect(-10, 10, -10, 10), z=(-2, 2))
        box = Box3D(1, 2, 0, 5, 3, 2, 0.3)
        s = make_scene(pts, [box])
        t = Transform2D(rotation=1.1, translation=(4.0, -2.0))
        out = apply_transform(s, t)
        m0 = points_in_box_mask(pts, box)
        m1 = points_in_box_mask(out.cloud.points, out.boxes[0])
        # boundary points may flip by rounding; none are expected on random data
        assert np.array_equal(m0, m1)


class TestIoU:
    def test_identical_and_disjoint(self):
        a = Box3D(1, 2, 0, 4, 2, 1.5, 0.3)
        assert bev_iou(a, a) == 1.0
        assert iou_3d(a, a) == 1.0
        assert bev_iou(a, a.replace(cx=101)) == 0.0

    def test_half_height_overlap_is_one_third(self):
        a = Box3D(0, 0, 0.0, 2, 2, 1)
        b = a.replace(cz=0.5)
        assert iou_3d(a, b) == pytest.approx(1 / 3, abs=1e-12)

    def test_axis_aligned_closed_form(self, rng):
        for _ in range(100):
            a = random_box(rng, 2.0).replace(yaw=0.0)
            b = random_box(rng, 2.0).replace(yaw=0.0)
            ix = max(0, min(a.cx + a.l / 2, b.cx + b.l / 2) - max(a.cx - a.l / 2, b.cx - b.l / 2))
            iy = max(0, min(a.cy + a.w / 2, b.cy + b.w / 2) - max(a.cy - a.w / 2, b.cy - b.w / 2))
            inter = ix * iy
            expected = inter / (a.l * a.w + b.l * b.w - inter)
            assert bev_iou(a, b) == pytest.approx(expected, abs=1e-12)

    def test_symmetric_and_bounded(self, rng):
        for _ in range(200):
            a, b = overlapping_pair(rng)
            v = bev_iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(bev_iou(b, a), abs=1e-12)
            assert iou_3d(a, b) == pytest.approx(iou_3d(b, a), abs=1e-12)

    def test_bev_matches_monte_carlo(self, rng):
        for k in range(10):
            a, b = overlapping_pair(rng)
            assert abs(bev_iou(a, b) - mc_bev_iou(a, b, 200_000, k)) <= 1e-2

    def test_3d_matches_monte_carlo(self, rng):
        for k in range(10):
            a, b = overlapping_pair(rng)
            assert abs(iou_3d(a, b) - mc_iou_3d(a, b, 200_000, k)) <= 1e-2

    def test_iou_matrix_agrees_with_pairwise(self, rng):
        a = [random_box(rng, 5) for _ in range(15)]
        b = [random_box(rng, 5) for _ in range(12)]
        m = iou_matrix(a, b, "3d")
        for i in range(15):
            for j in range(12):
                assert m[i, j] == iou_3d(a[i], b[j])


class TestVisiblePart:
    def test_fully_inside_and_outside(self):
        box = Box3D(0, 0, 0, 2, 1, 1, 0.3)
        frac, part = visible_part(box, Rect(-5, 5, -5, 5))
        assert frac == pytest.approx(1.0, abs=1e-12)
        assert part.as_array() == pytest.approx(box.as_array(), abs=1e-9)
        assert visible_part(box, Rect(10, 20, 10, 20)) == (0.0, None)

    def test_half_cut_axis_aligned(self):
        box = Box3D(0, 0, 0, 4, 2, 1)
        frac, part = visible_part(box, Rect(0, 10, -5, 5))
        assert frac == pytest.approx(0.5)
        assert (part.cx, part.cy, part.l, part.w) == pytest.approx((1.0, 0.0, 2.0, 2.0))

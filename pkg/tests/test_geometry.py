import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewalign.errors import BehindCameraError, DomainError
from viewalign.geometry import (
    Camera, DepthConvention, DepthMap, ImageRGB, Intrinsics, Mask, Pose, SparseDepthSet, bilinear_sample, lift,
    look_at, pixel_grid, pose_compose, pose_inverse, relative_pose, reproject, rotation_from_axis_angle,
)

K = Intrinsics(500.0, 500.0, 320.0, 180.0)


def random_pose(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return Pose(R, rng.uniform(-3, 3, 3))


def assert_pose_close(a, b, atol=1e-9):
    np.testing.assert_allclose(a.rotation, b.rotation, atol=atol)
    np.testing.assert_allclose(a.translation, b.translation, atol=atol)


class TestIntrinsics:
    def test_rejects_non_positive_focal(self):
        with pytest.raises(DomainError):
            Intrinsics(0.0, 1.0, 0.0, 0.0)
        with pytest.raises(DomainError):
            Intrinsics(1.0, -2.0, 0.0, 0.0)

    def test_rejects_non_finite_center(self):
        with pytest.raises(DomainError):
            Intrinsics(1.0, 1.0, math.nan, 0.0)

    def test_matrix_layout(self):
        np.testing.assert_array_equal(K.matrix, [[500, 0, 320], [0, 500, 180], [0, 0, 1]])

    def test_dict_round_trip(self):
        assert Intrinsics.from_dict(K.to_dict()) == K
        assert Intrinsics.from_array(K.as_array()) == K


class TestLift:
    def test_principal_point(self):
        np.testing.assert_array_equal(lift((K.cx, K.cy), 1.0, K), [0, 0, 1])

    def test_one_focal_length_offset(self):
        np.testing.assert_allclose(lift((K.cx + K.fx, K.cy), 1.0, K), [1, 0, 1])

    def test_formula(self):
        np.testing.assert_allclose(lift((320, 180), 2.0, K), [0, 0, 2])
        np.testing.assert_allclose(lift((330, 170), 2.0, K), [2 * 10 / 500, 2 * -10 / 500, 2])

    @pytest.mark.parametrize("depth", [0.0, -1.0])
    def test_non_positive_depth(self, depth):
        with pytest.raises(DomainError):
            lift((1, 1), depth, K)

    def test_vectorized(self):
        p = np.array([[320, 180], [820, 180]], dtype=float)
        np.testing.assert_allclose(lift(p, np.array([1.0, 2.0]), K), [[0, 0, 1], [2, 0, 2]])


class TestReproject:
    def test_optical_axis(self):
        p, z = reproject([0, 0, 1], K)
        np.testing.assert_allclose(p, [K.cx, K.cy])
        assert z == 1

    def test_formula(self):
        p, z = reproject([1, 0, 2], K)
        np.testing.assert_allclose(p, [570, K.cy])
        assert z == 2

    @pytest.mark.parametrize("z", [0.0, -0.5])
    def test_behind_camera(self, z):
        with pytest.raises(BehindCameraError):
            reproject([0.1, 0.2, z], K)

    @settings(max_examples=200, deadline=None)
    @given(
        px=st.floats(0, 639), py=st.floats(0, 359), d=st.floats(0.1, 100),
        fx=st.floats(50, 2000), fy=st.floats(50, 2000),
    )
    def test_round_trip(self, px, py, d, fx, fy):
        k = Intrinsics(fx, fy, 320.0, 180.0)
        p, z = reproject(lift((px, py), d, k), k)
        np.testing.assert_allclose(p, [px, py], rtol=1e-9, atol=1e-9)
        assert z == pytest.approx(d, rel=1e-9)


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(DomainError):
            Pose(np.diag([1.0, 1.0, 1.1]), np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(DomainError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_arrays_read_only(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.translation[0] = 1.0

    def test_compose_identity(self):
        p = random_pose(np.random.default_rng(0))
        assert_pose_close(pose_compose(Pose.identity(), p), p)
        assert_pose_close(pose_compose(p, Pose.identity()), p)

    def test_compose_inverse(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = random_pose(rng)
            assert_pose_close(pose_compose(p, pose_inverse(p)), Pose.identity())
            assert_pose_close(pose_compose(pose_inverse(p), p), Pose.identity())

    def test_translations_add(self):
        a = Pose(np.eye(3), [0, 0, 1])
        b = Pose(np.eye(3), [0, 0, 2])
        np.testing.assert_allclose(pose_compose(a, b).translation, [0, 0, 3])

    def test_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, c = (random_pose(rng) for _ in range(3))
            assert_pose_close(pose_compose(pose_compose(a, b), c), pose_compose(a, pose_compose(b, c)))

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(3)
        a, b = random_pose(rng), random_pose(rng)
        X = rng.standard_normal((10, 3))
        np.testing.assert_allclose(pose_compose(a, b).apply(X), a.apply(b.apply(X)), atol=1e-12)

    def test_relative_pose_maps_between_frames(self):
        rng = np.random.default_rng(4)
        src, dst = random_pose(rng), random_pose(rng)
        X = rng.standard_normal((5, 3))
        np.testing.assert_allclose(relative_pose(src, dst).apply(src.apply(X)), dst.apply(X), atol=1e-12)

    def test_dict_round_trip(self):
        p = random_pose(np.random.default_rng(5))
        assert_pose_close(Pose.from_dict(p.to_dict()), p, atol=0)

    def test_center(self):
        p = random_pose(np.random.default_rng(6))
        np.testing.assert_allclose(p.apply(p.center), 0, atol=1e-12)


def test_axis_angle_quarter_turn():
    R = rotation_from_axis_angle((0, 0, 1), math.pi / 2)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_look_at_puts_target_on_axis():
    pose = look_at((1, 2, 0), (0, 0, 5))
    c = pose.apply(np.array([0.0, 0.0, 5.0]))
    np.testing.assert_allclose(c[:2], 0, atol=1e-12)
    assert c[2] == pytest.approx(math.sqrt(1 + 4 + 25))


def test_pixel_grid_layout():
    g = pixel_grid(3, 2)
    assert g.shape == (2, 3, 2)
    np.testing.assert_array_equal(g[1, 2], [2, 1])


class TestDepthMap:
    def test_rejects_non_positive_valid(self):
        with pytest.raises(DomainError):
            DepthMap(np.array([[1.0, 0.0]]), np.array([[True, True]]))

    def test_rejects_non_finite_valid(self):
        with pytest.raises(DomainError):
            DepthMap(np.array([[1.0, np.inf]]), np.array([[True, True]]))

    def test_validity_inferred_without_mask(self):
        d = DepthMap(np.array([[1.0, 0.0, np.nan]]))
        np.testing.assert_array_equal(d.valid, [[True, False, False]])

    def test_invalid_entries_zeroed(self):
        d = DepthMap(np.array([[1.0, -5.0]]), np.array([[True, False]]))
        np.testing.assert_array_equal(d.values, [[1.0, 0.0]])

    def test_scaled_keeps_validity(self):
        d = DepthMap(np.array([[1.0, 2.0]]), np.array([[True, False]]), DepthConvention.RELATIVE)
        s = d.scaled(3.0)
        np.testing.assert_array_equal(s.values, [[3.0, 0.0]])
        assert s.convention is DepthConvention.RELATIVE
        assert d.scaled(2.0, DepthConvention.METRIC).convention is DepthConvention.METRIC

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            DepthMap(np.ones((2, 2)), np.ones((2, 3), dtype=bool))


def test_image_range_checked():
    with pytest.raises(DomainError):
        ImageRGB(np.full((2, 2, 3), 1.5))
    with pytest.raises(DomainError):
        ImageRGB(np.zeros((2, 2)))


def test_mask_count():
    m = Mask.full(3, 4)
    assert m.count() == 12
    assert Mask.full(3, 4, False).count() == 0


class TestSparseDepthSet:
    def test_rejects_outside_pixels(self):
        with pytest.raises(DomainError):
            SparseDepthSet(np.array([[10.0, 0.0]]), np.array([1.0]), 10, 10)

    def test_rejects_non_positive_depth(self):
        with pytest.raises(DomainError):
            SparseDepthSet(np.array([[1.0, 1.0]]), np.array([0.0]), 10, 10)

    def test_dict_round_trip(self):
        s = SparseDepthSet(np.array([[1.5, 2.25], [0.0, 9.0]]), np.array([3.0, 0.5]), 10, 10)
        t = SparseDepthSet.from_dict(s.to_dict())
        np.testing.assert_array_equal(t.pixels, s.pixels)
        np.testing.assert_array_equal(t.depths, s.depths)


def test_camera_clip_range():
    with pytest.raises(DomainError):
        Camera(K, Pose.identity(), 640, 360, near=1.0, far=0.5)
    cam = Camera(K, look_at((0, 0, 0), (0, 0, 1)), 640, 360, 0.1, 10)
    back = Camera.from_dict(cam.to_dict())
    assert back.intrinsics == cam.intrinsics and back.width == 640


class TestBilinear:
    def test_exact_on_affine_field(self):
        H, W = 5, 7
        g = pixel_grid(W, H)
        depth = DepthMap(1.0 + 0.3 * g[..., 0] + 0.2 * g[..., 1])
        rng = np.random.default_rng(0)
        pts = np.stack([rng.uniform(0, W - 1, 50), rng.uniform(0, H - 1, 50)], axis=1)
        vals, ok = bilinear_sample(depth, pts)
        assert ok.all()
        np.testing.assert_allclose(vals, 1.0 + 0.3 * pts[:, 0] + 0.2 * pts[:, 1], rtol=1e-12)

    def test_invalid_neighbour_flags_sample(self):
        v = np.ones((3, 3))
        valid = np.ones((3, 3), dtype=bool)
        valid[1, 1] = False
        _, ok = bilinear_sample(DepthMap(v, valid), np.array([[0.5, 0.5], [0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(ok, [False, True, True])

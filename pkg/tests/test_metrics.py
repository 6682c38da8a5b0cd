import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import K_SMALL
from viewalign import synth
from viewalign.errors import DomainError, InsufficientDataError, NoValidPixelsError
from viewalign.geometry import DepthMap, ImageRGB, Mask, Pose, bilinear_sample, lift, relative_pose, reproject
from viewalign.metrics import psnr_masked, warp_consistency


def noisy(seed, shape=(12, 16, 3)):
    return ImageRGB(synth.rng_for(seed).random(shape))


class TestPSNR:
    def test_identical_is_inf(self):
        a = noisy(0)
        assert psnr_masked(a, a) == math.inf

    def test_uniform_offset(self):
        a = ImageRGB(np.full((8, 8, 3), 0.3))
        b = ImageRGB(np.full((8, 8, 3), 0.4))
        assert psnr_masked(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_full_mask_matches_unmasked(self):
        a, b = noisy(1), noisy(2)
        assert psnr_masked(a, b, Mask(np.ones((12, 16), bool))) == psnr_masked(a, b)

    def test_mask_restricts(self):
        a = ImageRGB(np.zeros((4, 4, 3)))
        p = np.zeros((4, 4, 3))
        p[0] = 1.0
        sel = np.zeros((4, 4), bool)
        sel[1:] = True
        assert psnr_masked(a, ImageRGB(p), Mask(sel)) == math.inf
        # one error of 1 over eight pixels
        p[1, 0] = 0.5
        assert psnr_masked(a, ImageRGB(p), Mask(sel)) == pytest.approx(10 * math.log10(12 * 3 / 0.75))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**16), st.integers(0, 2**16))
    def test_symmetric(self, s1, s2):
        a, b = noisy(s1), noisy(s2 + 70000)
        assert psnr_masked(a, b) == psnr_masked(b, a)

    def test_empty_region(self):
        with pytest.raises(NoValidPixelsError):
            psnr_masked(noisy(0), noisy(1), Mask(np.zeros((12, 16), bool)))

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            psnr_masked(noisy(0), noisy(1, (12, 15, 3)))

    def test_out_of_range_clamped_with_warning(self, caplog):
        a = np.full((4, 4, 3), 1.5)
        with caplog.at_level(logging.WARNING, logger="viewalign.metrics"):
            v = psnr_masked(a, np.ones((4, 4, 3)))
        assert v == math.inf
        assert "clamping" in caplog.text


def brute_warp_consistency(depth, rel, K_src, K_dst, src, dst):
    """Per-point loop with scalar arithmetic."""
    total = 0.0
    for (x, y), (u, v) in zip(src, dst):
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        z = ((1 - fx) * (1 - fy) * depth[y0, x0] + fx * (1 - fy) * depth[y0, x0 + 1]
             + (1 - fx) * fy * depth[y0 + 1, x0] + fx * fy * depth[y0 + 1, x0 + 1])
        X = np.array([(x - K_src.cx) / K_src.fx * z, (y - K_src.cy) / K_src.fy * z, z])
        Y = rel.rotation @ X + rel.translation
        pu = K_dst.fx * Y[0] / Y[2] + K_dst.cx
        pv = K_dst.fy * Y[1] / Y[2] + K_dst.cy
        total += math.hypot(pu - u, pv - v)
    return total / len(src)


class TestWarpConsistency:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup(scene, anchor_render):
        a, b = scene.rig[0], scene.rig[1]
        corr = synth.correspondences(scene, a, b, n=300, seed=0)
        return anchor_render.depth, relative_pose(a.pose, b.pose), corr

    def test_ground_truth_zero(self, setup):
        depth, rel, c = setup
        assert warp_consistency(depth, rel, K_SMALL, K_SMALL, c.src, c.dst) < 1e-6

    def test_doubled_depth_errs(self, setup):
        depth, rel, c = setup
        assert np.linalg.norm(rel.translation) > 0
        assert warp_consistency(depth.scaled(2.0), rel, K_SMALL, K_SMALL, c.src, c.dst) > 0.5

    def test_matches_brute_force(self, setup):
        depth, rel, c = setup
        d = depth.scaled(1.3)
        rng = synth.rng_for(3)
        src = c.src + rng.uniform(-0.4, 0.4, c.src.shape)
        _, ok = bilinear_sample(d, src)
        src, dst = src[ok], c.dst[ok]
        got = warp_consistency(d, rel, K_SMALL, K_SMALL, src, dst)
        assert got == pytest.approx(brute_warp_consistency(d.values, rel, K_SMALL, K_SMALL, src, dst), rel=1e-10)

    def test_behind_camera_infinite(self):
        d = DepthMap(np.full((5, 5), 1.0))
        rel = Pose(np.eye(3), np.array([0.0, 0.0, -2.0]))
        assert warp_consistency(d, rel, K_SMALL, K_SMALL, [[2, 2]], [[2, 2]]) == math.inf

    def test_empty_and_mismatched(self):
        d = DepthMap(np.full((5, 5), 1.0))
        with pytest.raises(InsufficientDataError):
            warp_consistency(d, Pose.identity(), K_SMALL, K_SMALL, np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(DomainError):
            warp_consistency(d, Pose.identity(), K_SMALL, K_SMALL, [[1, 1]], [[1, 1], [2, 2]])

    def test_invalid_depth_rejected(self):
        v = np.ones((5, 5))
        valid = np.ones((5, 5), bool)
        valid[2, 2] = False
        with pytest.raises(DomainError):
            warp_consistency(DepthMap(v, valid), Pose.identity(), K_SMALL, K_SMALL, [[2, 2]], [[2, 2]])

    def test_identity_pose_is_exact(self):
        d = DepthMap(synth.rng_for(1).uniform(1, 3, (6, 7)))
        p = np.array([[1.0, 2.0], [3.5, 4.25]])
        X = lift(p, np.ones(2), K_SMALL)
        q, _ = reproject(X, K_SMALL)
        assert warp_consistency(d, Pose.identity(), K_SMALL, K_SMALL, p, q) < 1e-12

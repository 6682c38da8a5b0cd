import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff, rel_err
from viewalign.errors import DomainError, NoValidPixelsError
from viewalign.geometry import DepthMap, ImageRGB, Mask
from viewalign.losses import (
    LossWeights, gaussian_window, l1_grad, l1_loss, si_depth_loss, si_depth_loss_grad, ssim, ssim_grad, ssim_loss,
    ssim_loss_grad, total_loss, total_loss_grad,
)


def reference_ssim(a, b, size=11, sigma=1.5, c1=1e-4, c2=9e-4):
    """Per-window SSIM straight from the definition (slow, loops over windows)."""
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    H, W, C = a.shape
    vals = []
    for c in range(C):
        for y in range(H - size + 1):
            for x in range(W - size + 1):
                pa, pb = a[y:y + size, x:x + size, c], b[y:y + size, x:x + size, c]
                ma, mb = (g * pa).sum(), (g * pb).sum()
                va = (g * (pa - ma) ** 2).sum()
                vb = (g * (pb - mb) ** 2).sum()
                cov = (g * (pa - ma) * (pb - mb)).sum()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def random_depths(rng, shape=(8, 8)):
    return rng.uniform(0.5, 5.0, shape), rng.uniform(0.5, 5.0, shape)


class TestWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda_depth, w.lambda_color, w.lambda_ssim) == (0.5, 0.8, 0.2)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            LossWeights(-0.1, 1, 1)

    def test_parse(self):
        assert LossWeights.parse("0,1,0.25") == LossWeights(0.0, 1.0, 0.25)
        with pytest.raises(ValueError):
            LossWeights.parse("1,2")


class TestSIDepth:
    def test_equal_maps(self):
        d = np.random.default_rng(0).uniform(1, 2, (4, 4))
        assert si_depth_loss(d, d) == 0.0

    def test_two_pixel_value(self):
        assert si_depth_loss(np.array([[1.0, math.e]]), np.array([[1.0, 1.0]])) == pytest.approx(0.25, abs=1e-15)

    @pytest.mark.parametrize("c", [1e-3, 0.5, 1.0, 2.0, 1e3])
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(1)
        for _ in range(20):
            D, Ds = random_depths(rng, (16, 16))
            assert abs(si_depth_loss(c * D, Ds) - si_depth_loss(D, Ds)) <= 1e-12
            assert si_depth_loss(c * Ds, Ds) <= 1e-12

    def test_equals_population_variance(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            D, Ds = random_depths(rng, (9, 7))
            e = np.log(D) - np.log(Ds)
            assert si_depth_loss(D, Ds) == pytest.approx(np.var(e), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (5, 5), elements=st.floats(1e-3, 1e3)), arrays(np.float64, (5, 5),
                                                                           elements=st.floats(1e-3, 1e3)))
    def test_non_negative(self, D, Ds):
        assert si_depth_loss(D, Ds) >= 0.0

    def test_invalid_pixels_excluded(self):
        D = np.array([[1.0, math.e, 5.0]])
        Ds = np.array([[1.0, 1.0, 1.0]])
        valid = Mask(np.array([[True, True, False]]))
        assert si_depth_loss(D, Ds, valid) == pytest.approx(0.25)
        Dm = DepthMap(np.array([[1.0, math.e, 0.0]]))
        assert si_depth_loss(Dm, Ds) == pytest.approx(0.25)

    def test_no_valid_pixels(self):
        with pytest.raises(NoValidPixelsError):
            si_depth_loss(np.ones((2, 2)), np.ones((2, 2)), Mask.full(2, 2, False))
        with pytest.raises(NoValidPixelsError):
            si_depth_loss(np.zeros((2, 2)), np.ones((2, 2)))

    def test_grad_zero_at_scaled_copy(self):
        D = np.random.default_rng(3).uniform(1, 3, (6, 6))
        np.testing.assert_allclose(si_depth_loss_grad(D, D), 0, atol=1e-15)
        np.testing.assert_allclose(si_depth_loss_grad(2.5 * D, D), 0, atol=1e-14)

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            D, Ds = random_depths(rng)
            g = si_depth_loss_grad(D, Ds)
            fd = central_diff(lambda x: si_depth_loss(x, Ds), D, h=1e-6 * D.ravel())
            assert rel_err(g, fd) < 1e-5

    def test_grad_zero_outside_valid(self):
        D, Ds = random_depths(np.random.default_rng(5))
        valid = np.ones_like(D, dtype=bool)
        valid[0] = False
        assert (si_depth_loss_grad(D, Ds, valid)[0] == 0).all()


class TestL1:
    def test_identical(self):
        a = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert l1_loss(a, a) == 0.0

    def test_uniform_offset(self):
        b = np.random.default_rng(1).uniform(0, 0.9, (5, 4, 3))
        assert l1_loss(b + 0.1, b) == pytest.approx(0.1, abs=1e-15)

    def test_region(self):
        a, b = np.zeros((2, 2, 3)), np.zeros((2, 2, 3))
        a[0, 0] = 1.0
        assert l1_loss(a, b, Mask(np.array([[True, False], [False, False]]))) == 1.0
        assert l1_loss(a, b, Mask(np.array([[False, True], [False, False]]))) == 0.0

    def test_empty_region(self):
        with pytest.raises(NoValidPixelsError):
            l1_loss(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), Mask.full(2, 2, False))

    def test_grad_sign(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(size=(4, 5, 3)), rng.uniform(size=(4, 5, 3))
        np.testing.assert_allclose(l1_grad(a, b), np.sign(a - b) / (3 * 20))
        fd = central_diff(lambda x: l1_loss(x, b), a, 1e-7)
        assert rel_err(l1_grad(a, b), fd) < 1e-6


class TestSSIM:
    def test_window_normalized(self):
        w = gaussian_window()
        assert w.shape == (11,) and w.sum() == pytest.approx(1.0)

    def test_identical(self):
        a = np.random.default_rng(0).uniform(size=(16, 16, 3))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_equal(self):
        a = np.full((12, 12, 3), 0.5)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-15)

    def test_black_vs_white_matches_reference(self):
        a, b = np.zeros((12, 13, 3)), np.ones((12, 13, 3))
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-12)
        assert ssim(a, b) == pytest.approx(1e-4 / (1 + 1e-4), rel=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_random_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=(15, 17, 3))
        b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(7)
        a, b = rng.uniform(size=(12, 12, 3)), rng.uniform(size=(12, 12, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_too_small(self):
        with pytest.raises(DomainError):
            ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))

    def test_loss_convention(self):
        a = np.random.default_rng(8).uniform(size=(12, 12, 3))
        assert ssim_loss(a, a) == pytest.approx(0.0, abs=1e-12)
        assert ssim_loss(np.zeros_like(a), np.ones_like(a)) == pytest.approx((1 - 1e-4 / (1 + 1e-4)) / 2)

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(9)
        for _ in range(3):
            a, b = rng.uniform(size=(13, 12, 3)), rng.uniform(size=(13, 12, 3))
            fd = central_diff(lambda x: ssim_loss(x, b), a, 1e-6)
            assert rel_err(ssim_loss_grad(a, b), fd) < 1e-4
            assert rel_err(ssim_grad(a, b), -2 * fd) < 1e-4


class TestTotal:
    @pytest.fixture
    def case(self):
        rng = np.random.default_rng(0)
        img, tgt = rng.uniform(size=(12, 14, 3)), rng.uniform(size=(12, 14, 3))
        D, Ds = random_depths(rng, (12, 14))
        valid = Mask(rng.uniform(size=(12, 14)) > 0.3)
        return img, tgt, D, Ds, valid

    def test_zero_weights(self, case):
        total, parts = total_loss(*case, LossWeights(0, 0, 0))
        assert total == 0.0

    def test_perfect_render(self, case):
        img, _, D, _, valid = case
        total, parts = total_loss(img, img, D, 3.0 * D, valid, LossWeights())
        assert parts["l1"] == 0.0 and parts["si"] <= 1e-15 and parts["ssim"] <= 1e-12
        assert total <= 1e-12

    def test_compositional(self, case):
        img, tgt, D, Ds, valid = case
        total, parts = total_loss(img, tgt, D, Ds, valid, LossWeights())
        expect = 0.5 * si_depth_loss(D, Ds, valid) + 0.8 * l1_loss(img, tgt, valid) + 0.2 * ssim_loss(img, tgt)
        assert total == pytest.approx(expect, abs=1e-15)
        assert parts["si"] == si_depth_loss(D, Ds, valid)

    def test_accepts_domain_types(self, case):
        img, tgt, D, Ds, valid = case
        a = total_loss(ImageRGB(img), ImageRGB(tgt), DepthMap(D), DepthMap(Ds), valid, LossWeights())
        b = total_loss(img, tgt, D, Ds, valid, LossWeights())
        assert a == b

    def test_grad_matches_fd(self, case):
        img, tgt, D, Ds, valid = case
        w = LossWeights(0.7, 0.8, 0.2)
        gi, gd = total_loss_grad(img, tgt, D, Ds, valid, w)
        fdi = central_diff(lambda x: total_loss(x, tgt, D, Ds, valid, w)[0], img, 1e-7)
        fdd = central_diff(lambda x: total_loss(img, tgt, x, Ds, valid, w)[0], D, 1e-7)
        assert rel_err(gi, fdi) < 1e-4
        assert rel_err(gd, fdd) < 1e-4

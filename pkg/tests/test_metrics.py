import math

import numpy as np
import pytest

from cameranet import metrics
from cameranet.errors import ValidationError
from cameranet.image import SRGB, ImageTensor


def rand_img(seed, shape=(24, 24, 3), low=0.0, high=1.0):
    return np.random.default_rng(seed).uniform(low, high, shape)


class TestPSNR:
    def test_constant_offset_analytic(self):
        gt = np.full((16, 16, 3), 0.4)
        assert metrics.psnr(gt + 0.1, gt) == pytest.approx(20.0, abs=0.01)

    def test_identical_images_sentinel(self):
        img = rand_img(0)
        assert metrics.psnr(img, img) == math.inf

    def test_matches_loop_oracle(self):
        pred, gt = rand_img(1), rand_img(2)
        mse = 0.0
        h, w, c = pred.shape
        for y in range(h):
            for x in range(w):
                for k in range(c):
                    mse += (pred[y, x, k] - gt[y, x, k]) ** 2
        mse /= h * w * c
        want = 10 * math.log10(1.0 / mse)
        assert metrics.psnr(pred, gt) == pytest.approx(want, abs=1e-5)

    def test_clamps_before_comparing(self):
        gt = np.full((8, 8, 3), 0.5)
        assert metrics.psnr(gt + 3.0, gt) == metrics.psnr(
            np.ones_like(gt), gt)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            metrics.psnr(rand_img(0), rand_img(0, (8, 8, 3)))


class TestSSIM:
    def test_identical_images_exactly_one(self):
        img = rand_img(3)
        assert metrics.ssim(img, img) == 1.0

    def test_degradation_is_monotonic(self):
        gt = rand_img(4)
        rng = np.random.default_rng(5)
        mild = gt + rng.normal(0, 0.02, gt.shape)
        harsh = gt + rng.normal(0, 0.2, gt.shape)
        assert 1.0 > metrics.ssim(mild, gt) > metrics.ssim(harsh, gt)

    def test_accepts_image_tensors(self):
        img = ImageTensor(rand_img(6).astype(np.float32), SRGB)
        assert metrics.ssim(img, img) == 1.0

    def test_too_small_image_rejected(self):
        tiny = rand_img(7, (8, 8, 3))
        with pytest.raises(ValidationError):
            metrics.ssim(tiny, tiny)


class TestColorError:
    def test_identical_directions_zero_degrees(self):
        gt = rand_img(8, low=0.2, high=0.8)
        # scaling every pixel leaves the angle at zero
        assert metrics.color_error(gt * 0.7, gt) == pytest.approx(0.0,
                                                                  abs=1e-4)

    def test_orthogonal_colors_ninety_degrees(self):
        h, w = 8, 8
        pred = np.zeros((h, w, 3))
        gt = np.zeros((h, w, 3))
        pred[:, :, 0] = 1.0  # pure red
        gt[:, :, 1] = 0.5    # pure green, luminance 0.357 inside the mask
        assert metrics.color_error(pred, gt) == pytest.approx(90.0, abs=0.01)

    def test_luminance_mask_excludes_extremes(self):
        gt = np.zeros((4, 4, 3))
        gt[0, 0] = [0.5, 0.5, 0.5]   # only pixel inside (0.05, 0.95)
        gt[1, 1] = [1.0, 1.0, 1.0]   # too bright: masked out
        pred = gt.copy()
        pred[1, 1] = [1.0, 0.0, 0.0]  # error only on the masked pixel
        assert metrics.color_error(pred, gt) == pytest.approx(0.0, abs=1e-4)

    def test_all_masked_rejected(self):
        gt = np.zeros((4, 4, 3))
        with pytest.raises(ValidationError):
            metrics.color_error(gt, gt)


class TestHistogramDivergence:
    def test_identical_images_zero(self):
        img = rand_img(9)
        assert metrics.histogram_divergence(img, img) == 0.0

    def test_disjoint_histograms_max_out_at_two(self):
        dark = np.full((16, 16, 3), 0.1)
        bright = np.full((16, 16, 3), 0.9)
        assert metrics.histogram_divergence(dark, bright) == pytest.approx(2.0)

    def test_matches_loop_oracle(self):
        a, b = rand_img(10), rand_img(11)
        bins = 256
        la = np.clip(metrics.luminance(a), 0, 1).reshape(-1)
        lb = np.clip(metrics.luminance(b), 0, 1).reshape(-1)
        ha = [0] * bins
        hb = [0] * bins
        for v in la:
            ha[min(int(v * bins), bins - 1)] += 1
        for v in lb:
            hb[min(int(v * bins), bins - 1)] += 1
        want = sum(abs(x / len(la) - y / len(lb)) for x, y in zip(hb, ha))
        got = metrics.histogram_divergence(a, b)
        assert got == pytest.approx(want, abs=1e-5)

    def test_symmetry(self):
        a, b = rand_img(12), rand_img(13)
        assert metrics.histogram_divergence(a, b) == pytest.approx(
            metrics.histogram_divergence(b, a))

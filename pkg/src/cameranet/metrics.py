"""Evaluation metrics: PSNR, SSIM, masked color-angle error, and the
histogram divergence used in the restoration-vs-enhancement analysis."""

import math

import numpy as np
from scipy import ndimage

from cameranet.errors import ValidationError
from cameranet.image import ImageTensor

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], np.float64)


def _as_array(img):
    if isinstance(img, ImageTensor):
        return img.data.astype(np.float64)
    return np.asarray(img, np.float64)


def luminance(img):
    return _as_array(img) @ LUMA_WEIGHTS


def psnr(pred, gt, peak=1.0):
    """10*log10(peak^2 / MSE) after clamping both images to [0, peak].
    Identical images report math.inf."""
    pred = np.clip(_as_array(pred), 0.0, peak)
    gt = np.clip(_as_array(gt), 0.0, peak)
    if pred.shape != gt.shape:
        raise ValidationError(f"psnr: shapes {pred.shape} vs {gt.shape}")
    mse = np.mean((pred - gt) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size=11, sigma=1.5):
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(pred, gt, k1=0.01, k2=0.03, window_size=11, sigma=1.5, peak=1.0):
    """Mean structural similarity: 11x11 Gaussian window (sigma 1.5),
    per channel, averaged; window centers keep a half-window margin."""
    pred = _as_array(pred)
    gt = _as_array(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"ssim: shapes {pred.shape} vs {gt.shape}")
    h, w = pred.shape[:2]
    if h < window_size or w < window_size:
        raise ValidationError(
            f"ssim: image {h}x{w} smaller than window {window_size}")
    win = _gaussian_window(window_size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    m = window_size // 2
    vals = []
    for c in range(pred.shape[2]):
        x = pred[:, :, c]
        y = gt[:, :, c]
        mu_x = ndimage.convolve(x, win, mode="mirror")
        mu_y = ndimage.convolve(y, win, mode="mirror")
        xx = ndimage.convolve(x * x, win, mode="mirror") - mu_x ** 2
        yy = ndimage.convolve(y * y, win, mode="mirror") - mu_y ** 2
        xy = ndimage.convolve(x * y, win, mode="mirror") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
        smap = num / den
        vals.append(smap[m:h - m, m:w - m].mean())
    return float(np.mean(vals))


def color_error(pred, gt, lum_range=(0.05, 0.95)):
    """Mean angle in degrees between predicted and groundtruth RGB
    vectors, over pixels whose groundtruth luminance lies inside
    lum_range; zero-norm pixels are masked out."""
    pred = _as_array(pred)
    gt = _as_array(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"color_error: shapes {pred.shape} vs {gt.shape}")
    lum = luminance(gt)
    p = pred.reshape(-1, 3)
    g = gt.reshape(-1, 3)
    pn = np.linalg.norm(p, axis=1)
    gn = np.linalg.norm(g, axis=1)
    mask = ((lum.reshape(-1) > lum_range[0]) &
            (lum.reshape(-1) < lum_range[1]) & (pn > 0) & (gn > 0))
    if not mask.any():
        raise ValidationError("color_error: no valid pixels after masking")
    cos = np.sum(p[mask] * g[mask], axis=1) / (pn[mask] * gn[mask])
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(angles.mean())


def histogram_divergence(before, after, bins=256):
    """L1 distance between the normalized luminance histograms of two
    images clamped to [0, 1]."""
    lb = np.clip(luminance(before), 0.0, 1.0)
    la = np.clip(luminance(after), 0.0, 1.0)
    hb, _ = np.histogram(lb, bins=bins, range=(0.0, 1.0))
    ha, _ = np.histogram(la, bins=bins, range=(0.0, 1.0))
    hb = hb / hb.sum()
    ha = ha / ha.sum()
    return float(np.abs(hb - ha).sum())

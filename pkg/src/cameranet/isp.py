"""The fixed, non-learned ISP stages.

prepare() runs bad pixel removal, black/white level normalization,
vignetting compensation, and an initial bilinear demosaic, yielding a
camera-RGB image. The two color conversions flanking the learned
modules live here too. White balance is deliberately absent: it is a
per-channel global scaling that the restoration net's global component
learns.
"""

import numpy as np
from scipy import ndimage

from cameranet.errors import ShapeError, SpaceTagError, ValidationError
from cameranet.image import (CAMERA_RGB, SRGB, XYZ, ImageTensor, RawImage,
                             channel_masks)

# IEC 61966-2-1 D65 linear transform, XYZ -> sRGB and inverse
XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252]], dtype=np.float64)
SRGB_TO_XYZ = np.linalg.inv(XYZ_TO_SRGB)

GREEN_KERNEL = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], np.float32) / 4.0
REDBLUE_KERNEL = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], np.float32) / 4.0


def normalize_levels(cfa, black, white):
    """(v - black) / (white - black), clamped below at 0; values above
    the white level keep their headroom."""
    black = np.asarray(black, np.float32)
    white = np.asarray(white, np.float32)
    if np.any(white <= black):
        raise ValidationError("white level must exceed black level")
    out = (cfa.astype(np.float32) - black) / (white - black)
    return np.maximum(out, 0.0)


def remove_bad_pixels(cfa, bad_pixels, pattern):
    """Replace listed coordinates with the median of same-channel
    neighbors inside a 5x5 window."""
    if not bad_pixels:
        return cfa
    h, w = cfa.shape
    out = cfa.copy()
    for (y, x) in bad_pixels:
        if not (0 <= y < h and 0 <= x < w):
            raise ValidationError(f"bad pixel ({y}, {x}) outside mosaic")
        ys = slice(max(y - 2, 0), min(y + 3, h))
        xs = slice(max(x - 2, 0), min(x + 3, w))
        window = cfa[ys, xs]
        yy, xx = np.mgrid[ys, xs]
        same = (yy % 2 == y % 2) & (xx % 2 == x % 2) & \
               ((yy != y) | (xx != x))
        out[y, x] = np.median(window[same])
    return out


def compensate_vignetting(mosaic, gain):
    if gain is None:
        return mosaic
    gain = np.asarray(gain, np.float32)
    if gain.shape != mosaic.shape:
        raise ShapeError(
            f"vignette gain shape {gain.shape} != mosaic {mosaic.shape}")
    return mosaic * gain


def initial_demosaic(mosaic, pattern):
    """Per-channel bilinear interpolation (stand-in kernels; the
    interface admits alternative kernel sets). Measured sites keep
    their values exactly."""
    if mosaic.ndim != 2:
        raise ShapeError("initial_demosaic expects a 2-D mosaic")
    h, w = mosaic.shape
    if h % 2 or w % 2:
        raise ValidationError("mosaic extents must be even")
    masks = channel_masks(pattern, h, w)
    mosaic = mosaic.astype(np.float32)
    out = np.empty((h, w, 3), np.float32)
    for idx, ch in enumerate("RGB"):
        plane = np.where(masks[ch], mosaic, 0.0)
        kernel = GREEN_KERNEL if ch == "G" else REDBLUE_KERNEL
        # mirror (reflect-101) padding keeps the Bayer phase at borders
        out[:, :, idx] = ndimage.convolve(plane, kernel, mode="mirror")
    return ImageTensor(out, CAMERA_RGB)


def prepare(raw: RawImage, mad_outlier_removal=False) -> ImageTensor:
    """Fixed preparation: bad pixels, levels, vignetting, demosaic."""
    cfa = raw.cfa
    bad = raw.metadata.bad_pixel_list or []
    if mad_outlier_removal:
        bad = list(bad) + detect_bad_pixels(cfa, raw.pattern)
    cfa = remove_bad_pixels(cfa, bad, raw.pattern)
    mosaic = normalize_levels(cfa, raw.black_level, raw.white_level)
    mosaic = compensate_vignetting(mosaic, raw.metadata.vignette_gain)
    return initial_demosaic(mosaic, raw.pattern)


def detect_bad_pixels(cfa, pattern, mad_threshold=8.0):
    """Statistical outliers deviating more than mad_threshold median
    absolute deviations from their same-channel 5x5 neighborhood."""
    cfa = cfa.astype(np.float32)
    footprint = np.zeros((5, 5), bool)
    footprint[::2, ::2] = True
    footprint[2, 2] = False
    med = ndimage.median_filter(cfa, footprint=footprint, mode="mirror")
    dev = np.abs(cfa - med)
    mad = ndimage.median_filter(dev, footprint=footprint, mode="mirror")
    outliers = dev > mad_threshold * np.maximum(mad, 1.0)
    ys, xs = np.nonzero(outliers)
    return list(zip(ys.tolist(), xs.tolist()))


def _apply_matrix(img, matrix, out_space):
    flat = img.data.reshape(-1, 3).astype(np.float64)
    out = (flat @ matrix.T).astype(np.float32)
    return ImageTensor(out.reshape(img.data.shape), out_space)


def conversion_matrix(meta):
    """camera RGB -> XYZ: inverse of the elementwise average of the two
    metadata color matrices."""
    avg = (meta.color_matrix_1.astype(np.float64) +
           meta.color_matrix_2.astype(np.float64)) / 2.0
    if np.linalg.cond(avg) > 1e6:
        raise ValidationError("averaged color matrix is singular")
    return np.linalg.inv(avg)


def camera_rgb_to_xyz(img: ImageTensor, meta) -> ImageTensor:
    if img.space != CAMERA_RGB:
        raise SpaceTagError(
            f"camera_rgb_to_xyz expects camera_rgb input, got {img.space}")
    return _apply_matrix(img, conversion_matrix(meta), XYZ)


def xyz_to_srgb(img: ImageTensor) -> ImageTensor:
    """Linear XYZ -> linear sRGB; out-of-gamut negatives are preserved
    (clamping happens only at export)."""
    if img.space != XYZ:
        raise SpaceTagError(f"xyz_to_srgb expects xyz input, got {img.space}")
    return _apply_matrix(img, XYZ_TO_SRGB, SRGB)


def srgb_to_xyz(img: ImageTensor) -> ImageTensor:
    if img.space != SRGB:
        raise SpaceTagError(f"srgb_to_xyz expects srgb input, got {img.space}")
    return _apply_matrix(img, SRGB_TO_XYZ, XYZ)

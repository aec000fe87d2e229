"""The three training losses.

Restoration: mean L1 in the linear domain plus mean L1 in the clamped
log domain, so dark regions are not drowned out by highlight errors.
Enhancement: plain mean L1 in sRGB. Joint: convex combination weighted
by lambda. Means (not sums) keep magnitudes patch-size invariant.
"""

from dataclasses import dataclass

import numpy as np

from cameranet import autodiff as ad
from cameranet.autodiff import Tensor
from cameranet.errors import SpaceTagError, ValidationError
from cameranet.image import ImageTensor

DEFAULT_LOG_EPS = 1e-4


@dataclass
class LossConfig:
    epsilon: float = DEFAULT_LOG_EPS
    lambda_weight: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError("LossConfig.epsilon must lie in (0, 1)")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValidationError("LossConfig.lambda_weight must lie in [0, 1]")


def _as_tensor(value, expected_space, dtype=None):
    """Accept an ImageTensor (space-checked, converted to 1x3xHxW) or an
    autodiff Tensor already in network layout."""
    if isinstance(value, ImageTensor):
        if value.space != expected_space:
            raise SpaceTagError(
                f"loss expects {expected_space} input, got {value.space}")
        arr = value.data.transpose(2, 0, 1)[None]
        return Tensor(arr, dtype=dtype or np.float32)
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value), dtype=dtype or np.float32)


def mean_l1(pred, gt):
    return ad.sub(pred, gt).abs().mean()


def restoration_loss(pred, gt, epsilon=DEFAULT_LOG_EPS):
    pred = _as_tensor(pred, "xyz")
    gt = _as_tensor(gt, "xyz", dtype=pred.dtype.type)
    if pred.shape != gt.shape:
        raise ValidationError(
            f"restoration_loss: shapes {pred.shape} vs {gt.shape}")
    linear = mean_l1(pred, gt)
    logs = mean_l1(ad.log_clamped(pred, epsilon), ad.log_clamped(gt, epsilon))
    return ad.add(linear, logs)


def enhancement_loss(pred, gt):
    pred = _as_tensor(pred, "srgb")
    gt = _as_tensor(gt, "srgb", dtype=pred.dtype.type)
    if pred.shape != gt.shape:
        raise ValidationError(
            f"enhancement_loss: shapes {pred.shape} vs {gt.shape}")
    return mean_l1(pred, gt)


def joint_loss(rest_pred, rest_gt, enh_pred, enh_gt, cfg: LossConfig):
    """lambda * restoration + (1 - lambda) * enhancement."""
    lam = cfg.lambda_weight
    l_rest = restoration_loss(rest_pred, rest_gt, cfg.epsilon)
    l_enh = enhancement_loss(enh_pred, enh_gt)
    if lam == 1.0:
        return l_rest
    if lam == 0.0:
        return l_enh
    return ad.add(ad.scale(l_rest, lam), ad.scale(l_enh, 1.0 - lam))

"""The composed ISP: prepare -> camera-to-XYZ -> restoration net ->
XYZ-to-sRGB -> enhancement net, plus the one-stage counterpart used in
the ablation study."""

from dataclasses import dataclass

import numpy as np

from cameranet import autodiff as ad
from cameranet import isp, unet
from cameranet.autodiff import Tensor
from cameranet.errors import SpaceTagError, ValidationError
from cameranet.image import CAMERA_RGB, SRGB, XYZ, ImageTensor, RawImage
from cameranet.unet import ModuleParams, UNetSpec


def to_nchw(img, dtype=np.float32):
    """ImageTensor (or HxWx3 array) -> autodiff Tensor [1, 3, H, W]."""
    data = img.data if isinstance(img, ImageTensor) else np.asarray(img)
    return Tensor(data.transpose(2, 0, 1)[None], dtype=dtype)


def from_nchw(tensor, space):
    data = tensor.data if isinstance(tensor, Tensor) else tensor
    if data.shape[0] != 1:
        raise ValidationError("from_nchw expects batch size 1")
    return ImageTensor(data[0].transpose(1, 2, 0), space)


def xyz_to_srgb_tensor(x):
    """Differentiable XYZ -> linear sRGB on an NCHW tensor: the fixed
    3x3 color transform expressed as a 1x1 convolution."""
    w = Tensor(isp.XYZ_TO_SRGB.reshape(3, 3, 1, 1), dtype=x.dtype.type)
    b = Tensor(np.zeros(3), dtype=x.dtype.type)
    return ad.conv2d(x, w, b, padding=0)


def _pad_to_multiple(data, factor):
    """Reflect-pad an NCHW array so spatial extents divide factor."""
    h, w = data.shape[2:]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return data, (h, w)
    padded = np.pad(data, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return padded, (h, w)


def restore(i_raw_xyz, params, spec, pad=False):
    """Restoration stage; XYZ in, XYZ out, shape preserved."""
    if isinstance(i_raw_xyz, ImageTensor):
        if i_raw_xyz.space != XYZ:
            raise SpaceTagError(
                f"restore expects xyz input, got {i_raw_xyz.space}")
        x = to_nchw(i_raw_xyz)
        out = _run_net(x, params, spec, pad)
        return from_nchw(out, XYZ)
    return _run_net(i_raw_xyz, params, spec, pad)


def enhance(i_rest_srgb, params, spec, pad=False):
    """Enhancement stage; sRGB in, sRGB out, shape preserved."""
    if isinstance(i_rest_srgb, ImageTensor):
        if i_rest_srgb.space != SRGB:
            raise SpaceTagError(
                f"enhance expects srgb input, got {i_rest_srgb.space}")
        x = to_nchw(i_rest_srgb)
        out = _run_net(x, params, spec, pad)
        return from_nchw(out, SRGB)
    return _run_net(i_rest_srgb, params, spec, pad)


def _run_net(x, params, spec, pad):
    if pad:
        data, (h, w) = _pad_to_multiple(x.data, spec.downsample_factor)
        y = unet.forward_unet(params, spec, Tensor(data, dtype=x.dtype.type))
        if (h, w) != y.shape[2:]:
            y = Tensor(y.data[:, :, :h, :w], dtype=x.dtype.type)
        return y
    return unet.forward_unet(params, spec, x)


@dataclass
class PipelineResult:
    i_rest_xyz: ImageTensor
    i_enh_srgb: ImageTensor


def run_full(raw: RawImage, theta1, theta2, spec1, spec2, pad=True):
    """Execute the five stages in order; the intermediate restored XYZ
    image is exposed as a read-only tap."""
    prep = isp.prepare(raw)
    if prep.space != CAMERA_RGB:
        raise SpaceTagError("prepare must yield camera_rgb")
    i_raw_xyz = isp.camera_rgb_to_xyz(prep, raw.metadata)
    i_rest_xyz = restore(i_raw_xyz, theta1, spec1, pad=pad)
    i_rest_srgb = isp.xyz_to_srgb(i_rest_xyz)
    i_enh_srgb = enhance(i_rest_srgb, theta2, spec2, pad=pad)
    return PipelineResult(i_rest_xyz=i_rest_xyz.copy(), i_enh_srgb=i_enh_srgb)


def one_stage_spec(base_spec=None):
    """One-stage counterpart: a single enhancement-style U-Net with
    blocks_per_scale doubled, parameter count within 10% of the two-stage
    pair combined."""
    base = base_spec or unet.enhance_spec()
    return unet.enhance_spec(
        base_channels=base.base_channels,
        channel_cap=base.channel_cap,
        blocks_per_scale=2 * base.blocks_per_scale,
        in_channels=base.in_channels,
        out_channels=base.out_channels,
        leaky_slope=base.leaky_slope,
        stats_eps=base.stats_eps)


def build_one_stage_counterpart(base_spec=None, seed=0):
    spec = one_stage_spec(base_spec)
    return unet.build_unet(spec, seed, role="one_stage"), spec


def run_one_stage(raw: RawImage, params, spec, pad=True):
    """One-stage ablation: prepare + conversions, then a single net maps
    the raw sRGB rendering straight to the enhanced output."""
    prep = isp.prepare(raw)
    i_raw_xyz = isp.camera_rgb_to_xyz(prep, raw.metadata)
    i_raw_srgb = isp.xyz_to_srgb(ImageTensor(i_raw_xyz.data, XYZ))
    out = enhance(i_raw_srgb, params, spec, pad=pad)
    return out

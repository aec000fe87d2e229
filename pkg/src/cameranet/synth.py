"""Synthetic scene generation and dataset manifests.

Each scene is a (raw, restoration groundtruth, enhancement groundtruth)
triplet manufactured by a known forward model: a procedural linear
scene defines the restoration groundtruth in XYZ; a parametric tone /
saturation / local-contrast operator applied in sRGB defines the
enhancement groundtruth; the raw mosaic is produced by running the
restoration path backwards (camera color matrix, inverse white balance,
mosaicking, Poisson-Gaussian noise, 16-bit quantization).

Provenance (seed + sampled parameters) is stored per scene and suffices
to regenerate it bit-exactly.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from cameranet.errors import ManifestError, ValidationError
from cameranet.image import (SRGB, XYZ, CaptureMetadata, ImageTensor,
                             RawImage, channel_masks)
from cameranet.isp import SRGB_TO_XYZ, XYZ_TO_SRGB
from cameranet.metrics import luminance

MANIFEST_VERSION = 1


@dataclass
class SampleTriplet:
    raw: RawImage
    g_rest: ImageTensor
    g_enh: ImageTensor

    def __post_init__(self):
        if self.g_rest.space != XYZ:
            raise ValidationError("g_rest must be tagged xyz")
        if self.g_enh.space != SRGB:
            raise ValidationError("g_enh must be tagged srgb")
        h, w = self.raw.shape
        if self.g_rest.shape[:2] != (h, w) or self.g_enh.shape[:2] != (h, w):
            raise ValidationError("triplet spatial extents disagree")


@dataclass
class SynthConfig:
    height: int = 128
    width: int = 128
    pattern: str = "RGGB"
    black_level: int = 512
    white_level: int = 16383
    # sensor native color space: "srgb-like" primaries resemble display
    # primaries, "xyz-like" primaries resemble the XYZ matching functions
    camera_space: str = "srgb-like"
    # scene content
    num_shapes: tuple = (4, 10)
    texture_amp: tuple = (0.01, 0.06)
    value_floor: float = 0.02
    value_ceil: float = 0.90
    # degradation (ranges sampled per scene)
    exposure: tuple = (1.0, 1.0)
    shot_gain: tuple = (0.0, 0.0)
    read_sigma: tuple = (0.0, 0.0)
    wb_red: tuple = (1.0, 1.0)
    wb_blue: tuple = (1.0, 1.0)
    color_jitter: float = 0.0
    vignette_strength: tuple = (0.0, 0.0)
    bad_pixel_count: int = 0
    # enhancement operator (1.0 / 0.0 everywhere = identity)
    tone_gamma: tuple = (1.0, 1.0)
    tone_gain: tuple = (1.0, 1.0)
    saturation: tuple = (1.0, 1.0)
    local_contrast: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.height % 2 or self.width % 2:
            raise ValidationError("SynthConfig extents must be even")
        for name in ("num_shapes", "texture_amp", "exposure", "shot_gain",
                     "read_sigma",
                     "wb_red", "wb_blue", "vignette_strength", "tone_gamma",
                     "tone_gain", "saturation", "local_contrast"):
            pair = tuple(getattr(self, name))
            if len(pair) != 2 or pair[0] > pair[1]:
                raise ValidationError(f"SynthConfig.{name} must be a "
                                      f"(low, high) range, got {pair}")
            setattr(self, name, pair)
        if not 0 <= self.black_level < self.white_level <= 65535:
            raise ValidationError("SynthConfig levels out of range")
        if self.camera_space not in ("srgb-like", "xyz-like"):
            raise ValidationError(
                "SynthConfig.camera_space must be 'srgb-like' or 'xyz-like'")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValidationError(
                f"unknown SynthConfig field(s): {sorted(extra)}")
        return cls(**obj)


# Parameter presets spanning the three capture regimes: heavy noise with
# mild enhancement, clean capture with strong color styling, and a
# middle ground emphasizing local detail.
PRESETS = {
    "sid-like": dict(
        exposure=(0.08, 0.2), shot_gain=(0.002, 0.008),
        read_sigma=(0.005, 0.02),
        wb_red=(1.6, 2.4), wb_blue=(1.4, 2.2), color_jitter=0.10,
        tone_gamma=(0.85, 1.0), tone_gain=(1.0, 1.3),
        saturation=(1.0, 1.2), local_contrast=(0.0, 0.1)),
    "fivek-like": dict(
        shot_gain=(0.0, 0.0005), read_sigma=(0.0, 0.004),
        wb_red=(1.4, 2.0), wb_blue=(1.3, 1.9), color_jitter=0.10,
        tone_gamma=(0.55, 0.8), tone_gain=(1.5, 2.5),
        saturation=(1.4, 2.0), local_contrast=(0.0, 0.2)),
    "hdrplus-like": dict(
        shot_gain=(0.0005, 0.003), read_sigma=(0.004, 0.012),
        wb_red=(1.5, 2.2), wb_blue=(1.4, 2.0), color_jitter=0.10,
        tone_gamma=(0.65, 0.9), tone_gain=(1.2, 1.8),
        saturation=(1.1, 1.5), local_contrast=(0.3, 0.8)),
}


def preset_config(name, **overrides):
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; "
                              f"choose from {sorted(PRESETS)}")
    params = dict(PRESETS[name])
    params.update(overrides)
    return SynthConfig(**params)


# -- scene rendering -----------------------------------------------------------

def _render_scene(rng, cfg):
    """Procedural linear-sRGB scene: gradient base + soft shapes +
    sinusoidal texture; intensities stay inside (value_floor, value_ceil)
    so quantization never clips."""
    h, w = cfg.height, cfg.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= h
    xx /= w
    img = np.empty((h, w, 3))
    for c in range(3):
        a, b = rng.uniform(-0.5, 0.5, 2)
        img[:, :, c] = 0.5 + a * (xx - 0.5) + b * (yy - 0.5)
    n_shapes = rng.integers(cfg.num_shapes[0], cfg.num_shapes[1] + 1)
    for _ in range(n_shapes):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.12, 0.35, 2)
        angle = rng.uniform(0, np.pi)
        color = rng.uniform(-0.5, 0.5, 3)
        softness = rng.uniform(2.0, 5.0)
        dy = (yy - cy) / ry
        dx = (xx - cx) / rx
        u = np.cos(angle) * dx + np.sin(angle) * dy
        v = -np.sin(angle) * dx + np.cos(angle) * dy
        # edge sharpness is bounded so bilinear demosaicking stays
        # within its error budget on clean scenes
        blob = 1.0 / (1.0 + np.exp(
            np.clip(softness * (u * u + v * v - 1.0), -60.0, 60.0)))
        img += blob[:, :, None] * color[None, None, :]
    amp = rng.uniform(*cfg.texture_amp)
    for _ in range(6):
        freq = rng.uniform(2.0, 10.0)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq *
                      (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += amp * rng.uniform(0.3, 1.0, 3)[None, None, :] * \
            wave[:, :, None]
    lo, hi = cfg.value_floor, cfg.value_ceil
    span = img.max() - img.min()
    img = lo + (img - img.min()) * (hi - lo) / max(span, 1e-9)
    return img


def _schlick_gain(x, a):
    """Monotone [0,1] -> [0,1] S-curve; identity at a = 1."""
    lo = 0.5 * np.power(2.0 * x, a)
    hi = 1.0 - 0.5 * np.power(np.maximum(2.0 - 2.0 * x, 0.0), a)
    return np.where(x < 0.5, lo, hi)


def enhance_operator(img, tone_gamma=1.0, tone_gain=1.0, saturation=1.0,
                     local_contrast=0.0, blur_sigma=3.0):
    """Parametric global tone curve + saturation + local contrast,
    applied in sRGB on [0,1] data. All-default parameters are the
    identity map."""
    x = np.clip(np.asarray(img, np.float64), 0.0, 1.0)
    x = np.power(x, tone_gamma)
    x = _schlick_gain(x, tone_gain)
    if saturation != 1.0:
        lum = luminance(x)[:, :, None]
        x = lum + saturation * (x - lum)
    if local_contrast != 0.0:
        blurred = np.stack([ndimage.gaussian_filter(x[:, :, c], blur_sigma,
                                                    mode="mirror")
                            for c in range(3)], axis=2)
        x = x + local_contrast * (x - blurred)
    return np.clip(x, 0.0, 1.0)


# -- raw forward model ---------------------------------------------------------

def mosaic(rgb, pattern):
    """Project an H x W x 3 image onto the CFA: every site keeps exactly
    its pattern-designated channel."""
    if isinstance(rgb, ImageTensor):
        rgb = rgb.data
    rgb = np.asarray(rgb)
    h, w = rgb.shape[:2]
    if h % 2 or w % 2:
        raise ValidationError("mosaic: extents must be even")
    masks = channel_masks(pattern, h, w)
    out = np.zeros((h, w), rgb.dtype)
    for idx, ch in enumerate("RGB"):
        out[masks[ch]] = rgb[:, :, idx][masks[ch]]
    return out


def add_noise(plane, shot_gain, read_sigma, seed):
    """Poisson-Gaussian sensor noise on a normalized mosaic plane:
    v' = Poisson(v / shot_gain) * shot_gain + N(0, read_sigma), clamped
    at zero. shot_gain = 0 disables the shot-noise term."""
    if shot_gain < 0 or read_sigma < 0:
        raise ValidationError("noise parameters must be non-negative")
    rng = np.random.default_rng(seed)
    out = np.asarray(plane, np.float64)
    if shot_gain > 0:
        out = rng.poisson(np.maximum(out, 0.0) / shot_gain) * shot_gain
    if read_sigma > 0:
        out = out + rng.normal(0.0, read_sigma, size=out.shape)
    return np.maximum(out, 0.0)


def _sample_params(rng, cfg):
    return {
        "exposure": float(rng.uniform(*cfg.exposure)),
        "shot_gain": float(rng.uniform(*cfg.shot_gain)),
        "read_sigma": float(rng.uniform(*cfg.read_sigma)),
        "wb_gains": [float(rng.uniform(*cfg.wb_red)), 1.0,
                     float(rng.uniform(*cfg.wb_blue))],
        "color_jitter": [
            [float(v) for v in row] for row in
            rng.uniform(-cfg.color_jitter, cfg.color_jitter, (3, 3))],
        "matrix_split": float(rng.uniform(0.0, 0.05)),
        "vignette_strength": float(rng.uniform(*cfg.vignette_strength)),
        "tone_gamma": float(rng.uniform(*cfg.tone_gamma)),
        "tone_gain": float(rng.uniform(*cfg.tone_gain)),
        "saturation": float(rng.uniform(*cfg.saturation)),
        "local_contrast": float(rng.uniform(*cfg.local_contrast)),
        "noise_seed": int(rng.integers(0, 2 ** 31)),
    }


def generate_scene(seed, config):
    """Deterministically manufacture one SampleTriplet from a seed."""
    rng = np.random.default_rng(seed)
    scene_srgb = _render_scene(rng, config)
    params = _sample_params(rng, config)

    g_rest = ImageTensor(scene_srgb @ SRGB_TO_XYZ.T, XYZ)
    g_enh = ImageTensor(
        enhance_operator(scene_srgb, params["tone_gamma"],
                         params["tone_gain"], params["saturation"],
                         params["local_contrast"]), SRGB)

    # camera matrix: jittered XYZ->camera transform, stored as two
    # slightly split tags whose average reproduces it
    base = XYZ_TO_SRGB if config.camera_space == "srgb-like" else np.eye(3)
    forward = base @ (np.eye(3) + np.asarray(params["color_jitter"]))
    split = params["matrix_split"] * forward
    m1 = forward + split
    m2 = forward - split

    # exposure < 1 models an underexposed capture: the mosaic is dim but
    # the restoration groundtruth keeps the full-brightness scene, so
    # restoration includes exposure correction (the low-light regime)
    camera = g_rest.data.astype(np.float64) @ forward.T
    camera = camera * params["exposure"]
    wb = np.asarray(params["wb_gains"])
    camera = camera / wb[None, None, :]

    h, w = config.height, config.width
    vignette = None
    if params["vignette_strength"] > 0:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        r2 = ((yy / h - 0.5) ** 2 + (xx / w - 0.5) ** 2) / 0.5
        vignette = (1.0 + params["vignette_strength"] * r2).astype(np.float32)
        camera = camera / vignette[:, :, None]

    plane = mosaic(camera, config.pattern)
    plane = add_noise(plane, params["shot_gain"], params["read_sigma"],
                      params["noise_seed"])

    levels = config.white_level - config.black_level
    quantized = np.clip(np.round(config.black_level + plane * levels),
                        0, 65535).astype(np.uint16)

    bad_pixels = None
    if config.bad_pixel_count > 0:
        ys = rng.integers(0, h, config.bad_pixel_count)
        xs = rng.integers(0, w, config.bad_pixel_count)
        bad_pixels = sorted({(int(y), int(x)) for y, x in zip(ys, xs)})
        for (y, x) in bad_pixels:
            quantized[y, x] = config.white_level

    meta = CaptureMetadata(color_matrix_1=m1, color_matrix_2=m2,
                           wb_gains=wb, vignette_gain=vignette,
                           bad_pixel_list=bad_pixels)
    raw = RawImage(quantized, pattern=config.pattern,
                   black_level=config.black_level,
                   white_level=config.white_level, metadata=meta)
    return SampleTriplet(raw, g_rest, g_enh), params


# -- dataset manifests ---------------------------------------------------------

@dataclass
class SceneRecord:
    scene_id: str
    raw: str
    g_rest: str
    g_enh: str
    checksums: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class Manifest:
    root: Path
    records: list
    split: dict

    def subset(self, part):
        ids = set(self.split.get(part, []))
        return [r for r in self.records if r.scene_id in ids]


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_scene(triplet, params, scene_id, out_dir, config, seed):
    """Write one triplet's files and return its SceneRecord."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw_base = out_dir / f"{scene_id}_raw"
    rest_base = out_dir / f"{scene_id}_grest"
    enh_base = out_dir / f"{scene_id}_genh"
    triplet.raw.save(raw_base)
    triplet.g_rest.save_f32(rest_base)
    triplet.g_enh.save_f32(enh_base)
    files = [raw_base.with_suffix(".raw16"), raw_base.with_suffix(".json"),
             rest_base.with_suffix(".f32"), enh_base.with_suffix(".f32")]
    checksums = {f.name: _sha256(f) for f in files}
    return SceneRecord(
        scene_id=scene_id,
        raw=raw_base.name, g_rest=rest_base.name, g_enh=enh_base.name,
        checksums=checksums,
        provenance={"seed": int(seed), "config": config.to_json(),
                    "params": params})


def save_dataset(records, path, split):
    """Manifest JSON; the train/test split is an explicit field."""
    path = Path(path)
    ids = {r.scene_id for r in records}
    for part, members in split.items():
        missing = set(members) - ids
        if missing:
            raise ManifestError(
                f"split {part!r} references unknown scenes {sorted(missing)}")
    doc = {"version": MANIFEST_VERSION,
           "split": {k: list(v) for k, v in split.items()},
           "scenes": [r.to_json() for r in records]}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_dataset(path, verify_checksums=True):
    """Load and validate a manifest; every referenced file must exist
    and match its recorded checksum."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest missing: {path}")
    doc = json.loads(path.read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(
            f"unsupported manifest version {doc.get('version')}")
    root = path.parent
    records = [SceneRecord.from_json(obj) for obj in doc["scenes"]]
    ids = {r.scene_id for r in records}
    if len(ids) != len(records):
        raise ManifestError("duplicate scene_id in manifest")
    split = doc.get("split", {})
    for part, members in split.items():
        missing = set(members) - ids
        if missing:
            raise ManifestError(
                f"split {part!r} references unknown scenes {sorted(missing)}")
    for rec in records:
        for fname, digest in rec.checksums.items():
            fpath = root / fname
            if not fpath.exists():
                raise ManifestError(f"missing file: {fpath}")
            if verify_checksums and _sha256(fpath) != digest:
                raise ManifestError(f"checksum mismatch: {fpath}")
    return Manifest(root=root, records=records, split=split)


def load_triplet(record, root):
    root = Path(root)
    return SampleTriplet(
        raw=RawImage.load(root / record.raw),
        g_rest=ImageTensor.load_f32(root / record.g_rest),
        g_enh=ImageTensor.load_f32(root / record.g_enh))

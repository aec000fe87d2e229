"""Image containers and file formats.

RawImage: single-channel 16-bit CFA mosaic + JSON sidecar (pattern,
levels, capture metadata). ImageTensor: H x W x 3 float32 tagged with a
color space; interchange format is planar float32 (little-endian) + JSON
sidecar, display format is 16-bit PPM with clamp and gamma 2.2.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cameranet.errors import NonFiniteError, ValidationError

CAMERA_RGB = "camera_rgb"
XYZ = "xyz"
SRGB = "srgb"
SPACES = (CAMERA_RGB, XYZ, SRGB)

BAYER_PATTERNS = {
    "RGGB": ("R", "G", "G", "B"),
    "BGGR": ("B", "G", "G", "R"),
    "GRBG": ("G", "R", "B", "G"),
    "GBRG": ("G", "B", "R", "G"),
}

MAX_CONDITION_NUMBER = 1e6


def channel_masks(pattern, h, w):
    """Boolean R/G/B site masks of shape (h, w) for a Bayer pattern."""
    if pattern not in BAYER_PATTERNS:
        raise ValidationError(f"unsupported Bayer pattern {pattern!r}")
    sites = BAYER_PATTERNS[pattern]
    masks = {"R": np.zeros((h, w), bool), "G": np.zeros((h, w), bool),
             "B": np.zeros((h, w), bool)}
    for k, ch in enumerate(sites):
        masks[ch][k // 2::2, k % 2::2] = True
    return masks


@dataclass
class CaptureMetadata:
    """Optional per-capture data. The color matrices follow the raw-file
    convention (XYZ -> camera RGB); their averaged inverse converts
    camera RGB to XYZ."""
    color_matrix_1: np.ndarray = field(
        default_factory=lambda: np.eye(3, dtype=np.float32))
    color_matrix_2: np.ndarray = field(
        default_factory=lambda: np.eye(3, dtype=np.float32))
    wb_gains: np.ndarray | None = None
    vignette_gain: np.ndarray | None = None
    bad_pixel_list: list | None = None

    def __post_init__(self):
        self.color_matrix_1 = np.asarray(self.color_matrix_1, np.float32)
        self.color_matrix_2 = np.asarray(self.color_matrix_2, np.float32)
        for name in ("color_matrix_1", "color_matrix_2"):
            m = getattr(self, name)
            if m.shape != (3, 3):
                raise ValidationError(f"{name} must be 3x3")
            if np.linalg.cond(m) > MAX_CONDITION_NUMBER:
                raise ValidationError(f"{name} is singular or ill-conditioned")
        if self.wb_gains is not None:
            self.wb_gains = np.asarray(self.wb_gains, np.float32)
            if self.wb_gains.shape != (3,):
                raise ValidationError("wb_gains must have 3 entries")
        if self.vignette_gain is not None:
            self.vignette_gain = np.asarray(self.vignette_gain, np.float32)

    def to_json(self):
        out = {"color_matrix_1": self.color_matrix_1.tolist(),
               "color_matrix_2": self.color_matrix_2.tolist()}
        if self.wb_gains is not None:
            out["wb_gains"] = self.wb_gains.tolist()
        if self.vignette_gain is not None:
            out["vignette_gain"] = self.vignette_gain.tolist()
        if self.bad_pixel_list:
            out["bad_pixel_list"] = [list(p) for p in self.bad_pixel_list]
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            color_matrix_1=obj["color_matrix_1"],
            color_matrix_2=obj["color_matrix_2"],
            wb_gains=obj.get("wb_gains"),
            vignette_gain=obj.get("vignette_gain"),
            bad_pixel_list=[tuple(p) for p in obj.get("bad_pixel_list", [])]
            or None)


@dataclass
class RawImage:
    cfa: np.ndarray
    pattern: str = "RGGB"
    black_level: int = 512
    white_level: int = 16383
    metadata: CaptureMetadata = field(default_factory=CaptureMetadata)

    def __post_init__(self):
        self.cfa = np.asarray(self.cfa)
        if self.cfa.ndim != 2:
            raise ValidationError("RawImage.cfa must be 2-D")
        h, w = self.cfa.shape
        if h % 2 or w % 2:
            raise ValidationError("RawImage extents must be even")
        if self.pattern not in BAYER_PATTERNS:
            raise ValidationError(f"unsupported Bayer pattern {self.pattern!r}")
        if not self.black_level < self.white_level:
            raise ValidationError("black_level must be below white_level")

    @property
    def shape(self):
        return self.cfa.shape

    def save(self, path):
        """path.raw16 (LE uint16, row-major) + path.json sidecar."""
        path = Path(path)
        np.ascontiguousarray(self.cfa, dtype="<u2").tofile(
            path.with_suffix(".raw16"))
        sidecar = {"height": self.cfa.shape[0], "width": self.cfa.shape[1],
                   "pattern": self.pattern,
                   "black_level": int(self.black_level),
                   "white_level": int(self.white_level),
                   "metadata": self.metadata.to_json()}
        path.with_suffix(".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = Path(path)
        sidecar = json.loads(path.with_suffix(".json").read_text())
        cfa = np.fromfile(path.with_suffix(".raw16"), dtype="<u2")
        h, w = sidecar["height"], sidecar["width"]
        if cfa.size != h * w:
            raise ValidationError(
                f"raw mosaic size {cfa.size} != sidecar extents {h}x{w}")
        return cls(cfa.reshape(h, w), pattern=sidecar["pattern"],
                   black_level=sidecar["black_level"],
                   white_level=sidecar["white_level"],
                   metadata=CaptureMetadata.from_json(sidecar["metadata"]))


class ImageTensor:
    """H x W x 3 float32 image tagged with its color space."""

    __slots__ = ("data", "space")

    def __init__(self, data, space):
        data = np.asarray(data, np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValidationError(
                f"ImageTensor expects HxWx3 data, got {data.shape}")
        if space not in SPACES:
            raise ValidationError(f"unknown color space {space!r}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("ImageTensor data contains NaN/Inf")
        self.data = data
        self.space = space

    @property
    def shape(self):
        return self.data.shape

    def copy(self):
        return ImageTensor(self.data.copy(), self.space)

    def save_f32(self, path):
        """Planar (3, H, W) little-endian float32 + JSON sidecar."""
        path = Path(path)
        planar = np.ascontiguousarray(
            self.data.transpose(2, 0, 1), dtype="<f4")
        planar.tofile(path.with_suffix(".f32"))
        sidecar = {"height": self.data.shape[0], "width": self.data.shape[1],
                   "channels": 3, "space": self.space, "layout": "planar"}
        path.with_suffix(".f32.json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load_f32(cls, path):
        path = Path(path)
        sidecar = json.loads(path.with_suffix(".f32.json").read_text())
        h, w = sidecar["height"], sidecar["width"]
        data = np.fromfile(path.with_suffix(".f32"), dtype="<f4")
        if data.size != 3 * h * w:
            raise ValidationError(
                f"float image size {data.size} != sidecar extents 3x{h}x{w}")
        return cls(data.reshape(3, h, w).transpose(1, 2, 0), sidecar["space"])

    def save_ppm(self, path, gamma=2.2):
        """Display copy: clamp to [0,1], gamma encode, 16-bit P6 PPM."""
        path = Path(path)
        clipped = np.clip(self.data, 0.0, 1.0) ** (1.0 / gamma)
        pix = np.round(clipped * 65535.0).astype(">u2")
        h, w = pix.shape[:2]
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n65535\n".encode())
            fh.write(pix.tobytes())

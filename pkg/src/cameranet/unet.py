"""Five-scale U-Net construction and forward pass.

Two flavors share one builder: the restoration net uses plain conv
blocks (dilation 1 everywhere, no normalization), the enhancement net
uses residual blocks with adaptive batch normalization and dilation
rates (1, 2, 2, 4, 8) from the finest to the coarsest scale. Both carry
a global component at the coarsest scale: pooled features pass through
two fully connected layers and rescale the scale output per channel,
which lets the nets express global operations such as white balance.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from cameranet import autodiff as ad
from cameranet import checkpoint
from cameranet.autodiff import Tensor
from cameranet.errors import ValidationError

ENHANCE_DILATIONS = (1, 2, 2, 4, 8)


@dataclass
class UNetSpec:
    scales: int = 5
    base_channels: int = 16
    channel_cap: int = 128
    blocks_per_scale: int = 2
    dilations: tuple = (1, 1, 1, 1, 1)
    residual_blocks: bool = False
    abn: bool = False
    global_component: bool = True
    in_channels: int = 3
    out_channels: int = 3
    leaky_slope: float = 0.2
    stats_eps: float = 1e-5

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        self.validate()

    def validate(self):
        if self.scales < 2:
            raise ValidationError("UNetSpec.scales must be >= 2")
        if len(self.dilations) != self.scales:
            raise ValidationError(
                f"UNetSpec.dilations has length {len(self.dilations)}, "
                f"expected scales={self.scales}")
        for name in ("base_channels", "channel_cap", "blocks_per_scale",
                     "in_channels", "out_channels"):
            if getattr(self, name) < 1:
                raise ValidationError(f"UNetSpec.{name} must be positive")
        if any(d < 1 for d in self.dilations):
            raise ValidationError("UNetSpec.dilations must be >= 1")

    def channels(self):
        return [min(self.base_channels * 2 ** s, self.channel_cap)
                for s in range(self.scales)]

    @property
    def downsample_factor(self):
        return 2 ** (self.scales - 1)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        if "dilations" in obj:
            obj["dilations"] = tuple(obj["dilations"])
        return cls(**obj)


def restore_spec(**overrides):
    """Restoration flavor: plain blocks, no ABN, dilation 1 throughout."""
    spec = UNetSpec(**{"residual_blocks": False, "abn": False, **overrides})
    if spec.residual_blocks or spec.abn or any(d != 1 for d in spec.dilations):
        raise ValidationError(
            "restore_spec: plain blocks, no ABN, dilation 1 are required")
    return spec


def enhance_spec(**overrides):
    """Enhancement flavor: residual blocks, ABN, dilations (1,2,2,4,8)."""
    overrides.setdefault("dilations", ENHANCE_DILATIONS)
    spec = UNetSpec(**{"residual_blocks": True, "abn": True, **overrides})
    if not (spec.residual_blocks and spec.abn):
        raise ValidationError(
            "enhance_spec: residual blocks and ABN are required")
    return spec


class ModuleParams:
    """Named parameter collection for one network."""

    def __init__(self, role, tensors):
        self.role = role
        self._tensors = dict(tensors)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return self._tensors

    def count(self):
        return sum(int(t.data.size) for t in self._tensors.values())

    def zero_grads(self):
        for t in self._tensors.values():
            t.grad = None

    def copy(self):
        return ModuleParams(self.role, {
            n: Tensor(t.data.copy(), requires_grad=t.requires_grad)
            for n, t in self.items()})

    def checksum(self):
        h = hashlib.sha256()
        for name in sorted(self._tensors):
            h.update(name.encode())
            h.update(np.ascontiguousarray(
                self._tensors[name].data, dtype="<f4").tobytes())
        return h.hexdigest()

    def save(self, path, spec=None):
        meta = {"role": self.role}
        if spec is not None:
            meta["spec"] = spec.to_json()
        checkpoint.save_checkpoint(
            {n: t.data for n, t in self.items()}, path, meta=meta)

    @classmethod
    def load(cls, path):
        arrays, meta = checkpoint.load_checkpoint(path)
        params = cls(meta.get("role", "unknown"), {
            n: Tensor(a, requires_grad=True) for n, a in arrays.items()})
        spec = meta.get("spec")
        return params, (UNetSpec.from_json(spec) if spec else None)


def _layer_plan(spec):
    """Ordered (name, kind, shape_info) list; the builder's single source
    of truth for which parameters exist."""
    ch = spec.channels()
    convs_per_block = 2 if spec.residual_blocks else 1
    plan = []

    def conv(name, cin, cout):
        plan.append((f"{name}.w", "conv_w", (cout, cin, 3, 3)))
        plan.append((f"{name}.b", "bias", (cout,)))

    def block(prefix, c):
        for j in range(convs_per_block):
            conv(f"{prefix}.c{j}", c, c)
            if spec.abn:
                plan.append((f"{prefix}.c{j}.abn.gain", "gain", (c,)))
                plan.append((f"{prefix}.c{j}.abn.shift", "shift", (c,)))

    conv("enc0.in", spec.in_channels, ch[0])
    for s in range(spec.scales):
        if s > 0:
            conv(f"down{s}", ch[s - 1], ch[s])
        for i in range(spec.blocks_per_scale):
            block(f"enc{s}.b{i}", ch[s])
    if spec.global_component:
        c = ch[-1]
        plan.append(("glob.fc1.w", "fc_w", (c, c)))
        plan.append(("glob.fc1.b", "bias", (c,)))
        plan.append(("glob.fc2.w", "fc_w", (c, c)))
        plan.append(("glob.fc2.b", "bias", (c,)))
    for s in range(spec.scales - 2, -1, -1):
        conv(f"up{s}", ch[s + 1], ch[s])
        conv(f"dec{s}.fuse", 2 * ch[s], ch[s])
        for i in range(spec.blocks_per_scale):
            block(f"dec{s}.b{i}", ch[s])
    conv("out", ch[0], spec.out_channels)
    return plan


def build_unet(spec, seed, role="unet"):
    """Deterministic fan-in-scaled uniform initialization from seed.

    Weight bounds carry the leaky-ReLU variance-preserving gain so
    activation magnitudes stay roughly constant with depth."""
    spec.validate()
    rng = np.random.default_rng(seed)
    gain = np.sqrt(2.0 / (1.0 + spec.leaky_slope ** 2))
    tensors = {}
    for name, kind, shape in _layer_plan(spec):
        if kind in ("conv_w", "fc_w"):
            fan_in = shape[1] * shape[2] * shape[3] if len(shape) == 4 \
                else shape[1]
            bound = gain * np.sqrt(3.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif kind == "gain":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data.astype(np.float32), requires_grad=True)
    return ModuleParams(role, tensors)


# -- forward building blocks ---------------------------------------------------


def adaptive_batch_norm(x, gain, shift, stats_eps=1e-5):
    """Normalize each channel by its own spatial statistics (batch size is
    1 throughout, so these are per-instance stats), then apply the
    learnable affine pair."""
    B, C = x.shape[0], x.shape[1]
    if B != 1:
        raise ValidationError("adaptive_batch_norm supports batch size 1")
    mu = ad.reshape(ad.global_avg_pool(x), (B, C))
    xc = ad.add_per_channel(x, -mu)
    var = ad.reshape(ad.global_avg_pool(ad.mul(xc, xc)), (B, C))
    inv = ad.rsqrt(ad.add(var, stats_eps))
    xhat = ad.mul_per_channel(xc, inv)
    out = ad.mul_per_channel(xhat, ad.reshape(gain, (1, C)))
    return ad.add_per_channel(out, ad.reshape(shift, (1, C)))


def residual_block(x, params, prefix, dilation=1, abn=False, slope=0.2,
                   stats_eps=1e-5):
    """x + conv/act/conv stack; identity map when the convs are zero."""
    t = ad.conv2d(x, params[f"{prefix}.c0.w"], params[f"{prefix}.c0.b"],
                  dilation=dilation)
    if abn:
        t = adaptive_batch_norm(t, params[f"{prefix}.c0.abn.gain"],
                                params[f"{prefix}.c0.abn.shift"], stats_eps)
    t = ad.leaky_relu(t, slope)
    t = ad.conv2d(t, params[f"{prefix}.c1.w"], params[f"{prefix}.c1.b"],
                  dilation=dilation)
    if abn:
        t = adaptive_batch_norm(t, params[f"{prefix}.c1.abn.gain"],
                                params[f"{prefix}.c1.abn.shift"], stats_eps)
    return ad.add(x, t)


def plain_block(x, params, prefix, dilation=1, abn=False, slope=0.2,
                stats_eps=1e-5):
    t = ad.conv2d(x, params[f"{prefix}.c0.w"], params[f"{prefix}.c0.b"],
                  dilation=dilation)
    if abn:
        t = adaptive_batch_norm(t, params[f"{prefix}.c0.abn.gain"],
                                params[f"{prefix}.c0.abn.shift"], stats_eps)
    return ad.leaky_relu(t, slope)


def global_component(h_in, fc1, fc2, u_out, slope=0.2):
    """Per-channel rescale of the coarsest-scale output by the pooled and
    twice-projected input features: u_out ⊗ fc2(act(fc1(pool(h_in))))."""
    B, C = h_in.shape[0], h_in.shape[1]
    vec = ad.reshape(ad.global_avg_pool(h_in), (B, C))
    vec = ad.leaky_relu(ad.fully_connected(vec, fc1[0], fc1[1]), slope)
    vec = ad.fully_connected(vec, fc2[0], fc2[1])
    return ad.mul_per_channel(u_out, vec)


def forward_unet(params, spec, x):
    """Full encoder/decoder pass; output spatial extents equal input's."""
    if x.data.ndim != 4:
        raise ValidationError("forward_unet expects a 4-D input")
    B, C, H, W = x.shape
    if C != spec.in_channels:
        raise ValidationError(
            f"forward_unet: input has {C} channels, spec wants "
            f"{spec.in_channels}")
    f = spec.downsample_factor
    if H % f or W % f:
        raise ValidationError(
            f"forward_unet: spatial extents {H}x{W} must be divisible by "
            f"{f}; pad the input first")

    block = residual_block if spec.residual_blocks else plain_block
    kw = dict(abn=spec.abn, slope=spec.leaky_slope, stats_eps=spec.stats_eps)

    skips = []
    h = ad.leaky_relu(
        ad.conv2d(x, params["enc0.in.w"], params["enc0.in.b"]),
        spec.leaky_slope)
    for s in range(spec.scales):
        if s > 0:
            h = ad.leaky_relu(
                ad.conv2d(h, params[f"down{s}.w"], params[f"down{s}.b"],
                          stride=2),
                spec.leaky_slope)
        h_in = h
        for i in range(spec.blocks_per_scale):
            h = block(h, params, f"enc{s}.b{i}",
                      dilation=spec.dilations[s], **kw)
        if s < spec.scales - 1:
            skips.append(h)
        elif spec.global_component:
            h = global_component(
                h_in,
                (params["glob.fc1.w"], params["glob.fc1.b"]),
                (params["glob.fc2.w"], params["glob.fc2.b"]),
                h, spec.leaky_slope)

    for s in range(spec.scales - 2, -1, -1):
        h = ad.leaky_relu(
            ad.conv2d(ad.upsample_nearest2x(h),
                      params[f"up{s}.w"], params[f"up{s}.b"]),
            spec.leaky_slope)
        h = ad.concat_channels([h, skips[s]])
        h = ad.leaky_relu(
            ad.conv2d(h, params[f"dec{s}.fuse.w"], params[f"dec{s}.fuse.b"]),
            spec.leaky_slope)
        for i in range(spec.blocks_per_scale):
            h = block(h, params, f"dec{s}.b{i}",
                      dilation=spec.dilations[s], **kw)

    return ad.conv2d(h, params["out.w"], params["out.b"])

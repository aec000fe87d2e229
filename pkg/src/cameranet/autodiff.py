"""Reverse-mode autodiff on dense N-d float tensors.

Covers exactly the operation set the two U-Nets need: 2-D convolution
(stride/dilation/zero same-padding), affine layers, global average
pooling, per-channel scaling, channel concat, nearest 2x upsampling,
leaky ReLU, clamped log, and elementwise arithmetic with full
reductions. float32 is the working precision; building leaves as
float64 gives the replay mode used for gradient checking.

Backward walks the recorded graph once. A second backward through the
same graph raises TapeError; leaf gradients are assigned (not
accumulated) per call.
"""

import numpy as np

from cameranet import kernels
from cameranet.errors import ShapeError, TapeError, ValidationError

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """A value in the computation graph.

    Leaves are created directly; non-leaves carry the parents and the
    backward closure of the single operation that produced them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_consumed")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _ALLOWED_DTYPES:
            raise ValidationError(f"unsupported dtype {arr.dtype}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._consumed = False
        if any(p.requires_grad or p._parents for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- backward pass ------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise TapeError(
                f"backward requires a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise TapeError("backward was already called on this graph")
        if not self._parents:
            raise TapeError("loss is detached from the tape; nothing to do")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and (p._parents or p.requires_grad):
                    stack.append((p, False))

        acc = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = acc.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                node._backward(g, acc)
                node._consumed = True
            if node.requires_grad:
                node.grad = g

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ValidationError("tensor/tensor division is not supported")
        return scale(self, 1.0 / other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def abs(self):
        return tabs(self)


def _accum(acc, t, g):
    if not (t._parents or t.requires_grad):
        return
    key = id(t)
    if key in acc:
        # out-of-place: the stored array may be shared with another parent
        acc[key] = acc[key] + g
    else:
        acc[key] = g


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    if a.data.dtype != b.data.dtype:
        raise ValidationError(f"{op}: mixed dtypes {a.dtype}/{b.dtype}")


# -- elementwise and reductions ----------------------------------------------

def add(a, b):
    if not isinstance(b, Tensor):
        return Tensor._result(a.data + a.data.dtype.type(b), (a,),
                              lambda g, acc: _accum(acc, a, g))
    _same_shape(a, b, "add")

    def bwd(g, acc):
        _accum(acc, a, g)
        _accum(acc, b, g)
    return Tensor._result(a.data + b.data, (a, b), bwd)


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -b)
    _same_shape(a, b, "sub")

    def bwd(g, acc):
        _accum(acc, a, g)
        _accum(acc, b, -g)
    return Tensor._result(a.data - b.data, (a, b), bwd)


def mul(a, b):
    _same_shape(a, b, "mul")

    def bwd(g, acc):
        _accum(acc, a, g * b.data)
        _accum(acc, b, g * a.data)
    return Tensor._result(a.data * b.data, (a, b), bwd)


def scale(a, s):
    s = a.data.dtype.type(s)
    return Tensor._result(a.data * s, (a,),
                          lambda g, acc: _accum(acc, a, g * s))


def tsum(a):
    def bwd(g, acc):
        _accum(acc, a, np.broadcast_to(g, a.data.shape).copy())
    return Tensor._result(np.asarray(a.data.sum(dtype=a.data.dtype)),
                          (a,), bwd)


def tmean(a):
    n = a.data.dtype.type(a.data.size)

    def bwd(g, acc):
        _accum(acc, a, np.broadcast_to(g / n, a.data.shape).copy())
    return Tensor._result(np.asarray(a.data.mean(dtype=a.data.dtype)),
                          (a,), bwd)


def tabs(a):
    def bwd(g, acc):
        _accum(acc, a, g * np.sign(a.data))
    return Tensor._result(np.abs(a.data), (a,), bwd)


def leaky_relu(a, slope=0.2):
    pos = a.data >= 0
    out = np.where(pos, a.data, a.data.dtype.type(slope) * a.data)

    def bwd(g, acc):
        _accum(acc, a, np.where(pos, g, a.data.dtype.type(slope) * g))
    return Tensor._result(out, (a,), bwd)


def log_clamped(a, eps):
    """ln(max(x, eps)); gradient is zero where x < eps."""
    if not 0 < eps:
        raise ValidationError("log_clamped eps must be positive")
    eps = a.data.dtype.type(eps)
    clamped = np.maximum(a.data, eps)
    live = a.data >= eps

    def bwd(g, acc):
        _accum(acc, a, np.where(live, g / clamped, a.data.dtype.type(0)))
    return Tensor._result(np.log(clamped), (a,), bwd)


def rsqrt(a):
    out = 1.0 / np.sqrt(a.data)

    def bwd(g, acc):
        _accum(acc, a, g * (a.data.dtype.type(-0.5) * out ** 3))
    return Tensor._result(out.astype(a.data.dtype), (a,), bwd)


def reshape(a, shape):
    orig = a.data.shape

    def bwd(g, acc):
        _accum(acc, a, g.reshape(orig))
    return Tensor._result(a.data.reshape(shape), (a,), bwd)


# -- structured ops -----------------------------------------------------------

def concat_channels(parts):
    parts = list(parts)
    if not parts:
        raise ValidationError("concat_channels needs at least one tensor")
    first = parts[0]
    for p in parts[1:]:
        if p.data.ndim != 4 or first.data.ndim != 4:
            raise ShapeError("concat_channels expects 4-D tensors")
        if p.data.shape[0] != first.data.shape[0]:
            raise ShapeError("concat_channels: batch extents differ")
        if p.data.shape[2:] != first.data.shape[2:]:
            raise ShapeError(
                f"concat_channels: spatial extents {p.shape[2:]} vs "
                f"{first.shape[2:]}")
    widths = [p.data.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bwd(g, acc):
        for p, piece in zip(parts, np.split(g, splits, axis=1)):
            _accum(acc, p, piece)
    return Tensor._result(np.concatenate([p.data for p in parts], axis=1),
                          tuple(parts), bwd)


def upsample_nearest2x(a):
    if a.data.ndim != 4:
        raise ShapeError("upsample_nearest2x expects a 4-D tensor")
    out = np.repeat(np.repeat(a.data, 2, axis=2), 2, axis=3)
    B, C, H, W = a.data.shape

    def bwd(g, acc):
        _accum(acc, a, g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)))
    return Tensor._result(out, (a,), bwd)


def global_avg_pool(a):
    if a.data.ndim != 4:
        raise ShapeError("global_avg_pool expects a 4-D tensor")
    B, C, H, W = a.data.shape
    n = a.data.dtype.type(H * W)
    out = a.data.mean(axis=(2, 3), keepdims=True, dtype=a.data.dtype)

    def bwd(g, acc):
        _accum(acc, a, np.broadcast_to(g / n, a.data.shape).copy())
    return Tensor._result(out, (a,), bwd)


def mul_per_channel(feature, scale_vec):
    """out[b,c,h,w] = feature[b,c,h,w] * scale_vec[b,c]."""
    if feature.data.ndim != 4:
        raise ShapeError("mul_per_channel expects a 4-D feature tensor")
    if scale_vec.data.ndim != 2:
        raise ShapeError("mul_per_channel expects a [batch, ch] scale")
    if feature.data.shape[:2] != scale_vec.data.shape:
        raise ShapeError(
            f"mul_per_channel: channel extents {feature.shape[:2]} vs "
            f"{scale_vec.shape}")
    s = scale_vec.data[:, :, None, None]

    def bwd(g, acc):
        _accum(acc, feature, g * s)
        _accum(acc, scale_vec, (g * feature.data).sum(axis=(2, 3)))
    return Tensor._result(feature.data * s, (feature, scale_vec), bwd)


def add_per_channel(feature, vec):
    """out[b,c,h,w] = feature[b,c,h,w] + vec[b,c]."""
    if feature.data.ndim != 4 or vec.data.ndim != 2:
        raise ShapeError("add_per_channel expects 4-D feature, 2-D vec")
    if feature.data.shape[:2] != vec.data.shape:
        raise ShapeError(
            f"add_per_channel: channel extents {feature.shape[:2]} vs "
            f"{vec.shape}")

    def bwd(g, acc):
        _accum(acc, feature, g)
        _accum(acc, vec, g.sum(axis=(2, 3)))
    return Tensor._result(feature.data + vec.data[:, :, None, None],
                          (feature, vec), bwd)


def fully_connected(x, weight, bias):
    """x [batch, in] @ weight.T [in, out] + bias [out]."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError("fully_connected expects 2-D x, 2-D weight, 1-D bias")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"fully_connected: in extent {x.shape[1]} vs weight "
            f"{weight.shape[1]}")
    if weight.data.shape[0] != bias.data.shape[0]:
        raise ShapeError("fully_connected: bias extent mismatch")
    out = x.data @ weight.data.T + bias.data

    def bwd(g, acc):
        _accum(acc, x, g @ weight.data)
        _accum(acc, weight, g.T @ x.data)
        _accum(acc, bias, g.sum(axis=0))
    return Tensor._result(out, (x, weight, bias), bwd)


def _conv_geometry(x_shape, w_shape, stride, dilation, padding):
    B, C, H, W = x_shape
    O, Ci, kh, kw = w_shape
    if Ci != C:
        raise ShapeError(f"conv2d: input channels {C} != weight in_ch {Ci}")
    if stride < 1 or dilation < 1:
        raise ValidationError("conv2d: stride and dilation must be >= 1")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValidationError("conv2d: same-padding needs odd kernels")
        ph = dilation * (kh - 1) // 2
        pw = dilation * (kw - 1) // 2
    elif padding in (0, "valid"):
        ph = pw = 0
    elif isinstance(padding, int) and padding > 0:
        ph = pw = padding
    else:
        raise ValidationError(f"conv2d: bad padding {padding!r}")
    eff_h = dilation * (kh - 1) + 1
    eff_w = dilation * (kw - 1) + 1
    if H + 2 * ph < eff_h:
        raise ShapeError(
            f"conv2d: height {H} smaller than effective kernel {eff_h}")
    if W + 2 * pw < eff_w:
        raise ShapeError(
            f"conv2d: width {W} smaller than effective kernel {eff_w}")
    out_h = (H + 2 * ph - eff_h) // stride + 1
    out_w = (W + 2 * pw - eff_w) // stride + 1
    return ph, pw, out_h, out_w


def conv2d(x, weight, bias, stride=1, dilation=1, padding="same"):
    """2-D convolution (cross-correlation) with zero same-padding."""
    if x.data.ndim != 4:
        raise ShapeError("conv2d expects a 4-D input")
    if weight.data.ndim != 4:
        raise ShapeError("conv2d expects a 4-D weight")
    if bias.data.ndim != 1 or bias.data.shape[0] != weight.data.shape[0]:
        raise ShapeError("conv2d: bias extent must equal out channels")
    B, C, H, W = x.data.shape
    O, _, kh, kw = weight.data.shape
    ph, pw, out_h, out_w = _conv_geometry(
        x.data.shape, weight.data.shape, stride, dilation, padding)

    dtype = x.data.dtype
    if ph or pw:
        padded = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=dtype)
        padded[:, :, ph:ph + H, pw:pw + W] = x.data
    else:
        padded = np.ascontiguousarray(x.data)
    cols = np.empty((B, C * kh * kw, out_h * out_w), dtype=dtype)
    kernels.im2col(padded, kh, kw, stride, dilation, out_h, out_w, cols)

    wmat = weight.data.reshape(O, -1)
    out = np.matmul(wmat, cols) + bias.data[None, :, None]
    out = np.ascontiguousarray(out.reshape(B, O, out_h, out_w))

    def bwd(g, acc):
        gmat = g.reshape(B, O, out_h * out_w)
        _accum(acc, bias, gmat.sum(axis=(0, 2)))
        _accum(acc, weight,
               np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
               .reshape(weight.data.shape))
        if x._parents or x.requires_grad:
            dcols = np.ascontiguousarray(np.matmul(wmat.T, gmat))
            dpadded = np.zeros(padded.shape, dtype=dtype)
            kernels.col2im(dcols, kh, kw, stride, dilation, out_h, out_w,
                           dpadded)
            if ph or pw:
                dpadded = dpadded[:, :, ph:ph + H, pw:pw + W]
            _accum(acc, x, np.ascontiguousarray(dpadded))
    return Tensor._result(out, (x, weight, bias), bwd)

import numpy as np
import pytest

from cameranet import kernels


def geometry(h=7, w=6, k=3, stride=1, dilation=1):
    pad = dilation * (k - 1) // 2
    out_h = (h + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    out_w = (w + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    return pad, out_h, out_w


@pytest.mark.parametrize("stride,dilation", [(1, 1), (2, 1), (1, 2)])
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_agree(stride, dilation, dtype):
    if not kernels.HAVE_NATIVE:
        pytest.skip("native kernels not built")
    h, w, k = 9, 8, 3
    pad, out_h, out_w = geometry(h, w, k, stride, dilation)
    rng = np.random.default_rng(0)
    padded = rng.standard_normal((2, 3, h + 2 * pad, w + 2 * pad)).astype(dtype)

    results = {}
    for name in ("python", "native"):
        im2col, col2im = kernels.get_backend(name)
        cols = np.zeros((2, 3 * k * k, out_h * out_w), dtype)
        im2col(padded, k, k, stride, dilation, out_h, out_w, cols)
        back = np.zeros_like(padded)
        col2im(cols, k, k, stride, dilation, out_h, out_w, back)
        results[name] = (cols.copy(), back.copy())
    assert np.array_equal(results["python"][0], results["native"][0])
    assert np.abs(results["python"][1] - results["native"][1]).max() < 1e-5


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), y> == <x, col2im(y)> characterizes the correct scatter
    h, w, k, stride, dilation = 8, 8, 3, 1, 2
    pad, out_h, out_w = geometry(h, w, k, stride, dilation)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, h + 2 * pad, w + 2 * pad))
    y = rng.standard_normal((1, 2 * k * k, out_h * out_w))
    cols = np.zeros_like(y)
    kernels.im2col(x, k, k, stride, dilation, out_h, out_w, cols)
    back = np.zeros_like(x)
    kernels.col2im(y, k, k, stride, dilation, out_h, out_w, back)
    assert np.vdot(cols, y) == pytest.approx(np.vdot(x, back), rel=1e-10)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")

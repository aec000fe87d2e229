"""Compare the compiled and pure-numpy convolution kernel backends.

Times im2col / col2im (the hot inner kernels) and a full conv2d
forward+backward pass through the autodiff engine, for a few
representative shapes.

Usage: python3 benchmarks/bench_conv.py [--repeat N]
"""

import argparse
import time

import numpy as np

from cameranet import autodiff as ad
from cameranet import kernels
from cameranet.autodiff import Tensor

SHAPES = [
    # (batch, cin, h, w, cout, k, dilation)
    (1, 16, 64, 64, 16, 3, 1),
    (1, 64, 32, 32, 64, 3, 1),
    (1, 128, 16, 16, 128, 3, 2),
    (1, 3, 128, 128, 16, 3, 1),
]


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(backend, shape, repeat):
    im2col, col2im = kernels.get_backend(backend)
    b, cin, h, w, cout, k, dil = shape
    pad = dil * (k - 1) // 2
    rng = np.random.default_rng(0)
    padded = rng.standard_normal(
        (b, cin, h + 2 * pad, w + 2 * pad)).astype(np.float32)
    cols = np.empty((b, cin * k * k, h * w), np.float32)
    grad_padded = np.zeros_like(padded)
    t_fwd = time_call(
        lambda: im2col(padded, k, k, 1, dil, h, w, cols), repeat)
    t_bwd = time_call(
        lambda: col2im(cols, k, k, 1, dil, h, w, grad_padded), repeat)
    return t_fwd, t_bwd


def bench_conv(shape, repeat):
    b, cin, h, w, cout, k, dil = shape
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((b, cin, h, w)), requires_grad=True)
    wt = Tensor(rng.standard_normal((cout, cin, k, k)) * 0.05,
                requires_grad=True)
    bias = Tensor(np.zeros(cout), requires_grad=True)

    def run():
        x.grad = wt.grad = bias.grad = None
        ad.conv2d(x, wt, bias, padding="same", dilation=dil).sum().backward()
    return time_call(run, repeat)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = ["python"] + (["native"] if kernels.HAVE_NATIVE else [])
    print(f"active backend: {kernels.BACKEND} "
          f"(native built: {kernels.HAVE_NATIVE})\n")
    header = f"{'shape (b,cin,hxw,cout,k,dil)':34s}"
    for be in backends:
        header += f"  {be + ' im2col':>14s}  {be + ' col2im':>14s}"
    print(header)
    for shape in SHAPES:
        b, cin, h, w, cout, k, dil = shape
        label = f"{b},{cin},{h}x{w},{cout},{k},{dil}"
        line = f"{label:34s}"
        for be in backends:
            t_fwd, t_bwd = bench_kernels(be, shape, args.repeat)
            line += f"  {t_fwd * 1e3:12.2f}ms  {t_bwd * 1e3:12.2f}ms"
        print(line)

    print(f"\nfull conv2d forward+backward (active backend "
          f"= {kernels.BACKEND}):")
    for shape in SHAPES:
        b, cin, h, w, cout, k, dil = shape
        label = f"{b},{cin},{h}x{w},{cout},{k},{dil}"
        print(f"{label:34s}  {bench_conv(shape, args.repeat) * 1e3:12.2f}ms")


if __name__ == "__main__":
    main()

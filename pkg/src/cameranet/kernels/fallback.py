"""Pure-numpy im2col / col2im, used when the compiled extension is absent.

Vectorized over the spatial plane; only the small kh*kw loop runs in
Python. Gather results are bit-identical to the compiled kernels.
"""

import numpy as np


def im2col(padded, kh, kw, stride, dilation, out_h, out_w, cols):
    B, C = padded.shape[:2]
    for i in range(kh):
        for j in range(kw):
            y0 = i * dilation
            x0 = j * dilation
            patch = padded[:, :,
                           y0:y0 + (out_h - 1) * stride + 1:stride,
                           x0:x0 + (out_w - 1) * stride + 1:stride]
            rows = (np.arange(C) * kh + i) * kw + j
            cols[:, rows, :] = patch.reshape(B, C, out_h * out_w)


def col2im(cols, kh, kw, stride, dilation, out_h, out_w, padded):
    B, C = padded.shape[:2]
    for i in range(kh):
        for j in range(kw):
            y0 = i * dilation
            x0 = j * dilation
            rows = (np.arange(C) * kh + i) * kw + j
            padded[:, :,
                   y0:y0 + (out_h - 1) * stride + 1:stride,
                   x0:x0 + (out_w - 1) * stride + 1:stride] += \
                cols[:, rows, :].reshape(B, C, out_h, out_w)

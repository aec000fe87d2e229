# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im kernels for 2-D convolution.

These are the hot inner loops of the convolution forward and backward
passes. Semantics match cameranet.kernels.fallback exactly; the gather
(im2col) is bit-identical, the scatter (col2im) may differ from the
fallback in the last float32 bit because summation order differs.
"""

cimport cython

ctypedef fused floating:
    float
    double


cpdef void im2col(floating[:, :, :, ::1] padded,
                  Py_ssize_t kh, Py_ssize_t kw,
                  Py_ssize_t stride, Py_ssize_t dilation,
                  Py_ssize_t out_h, Py_ssize_t out_w,
                  floating[:, :, ::1] cols) nogil:
    """Gather conv patches: cols[b, (c*kh+i)*kw+j, y*out_w+x]."""
    cdef Py_ssize_t B = padded.shape[0]
    cdef Py_ssize_t C = padded.shape[1]
    cdef Py_ssize_t b, c, i, j, y, x, row
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for y in range(out_h):
                        for x in range(out_w):
                            cols[b, row, y * out_w + x] = padded[
                                b, c, y * stride + i * dilation,
                                x * stride + j * dilation]


cpdef void col2im(floating[:, :, ::1] cols,
                  Py_ssize_t kh, Py_ssize_t kw,
                  Py_ssize_t stride, Py_ssize_t dilation,
                  Py_ssize_t out_h, Py_ssize_t out_w,
                  floating[:, :, :, ::1] padded) nogil:
    """Scatter-add conv patch gradients back onto the padded input."""
    cdef Py_ssize_t B = padded.shape[0]
    cdef Py_ssize_t C = padded.shape[1]
    cdef Py_ssize_t b, c, i, j, y, x, row
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for y in range(out_h):
                        for x in range(out_w):
                            padded[b, c, y * stride + i * dilation,
                                   x * stride + j * dilation] += cols[
                                b, row, y * out_w + x]

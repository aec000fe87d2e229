"""Convolution kernel backend selection.

The compiled extension is preferred when available; set
``CAMERANET_KERNELS=python`` to force the numpy fallback (used by the
benchmark and by tests that compare the two backends).
"""

import os

from cameranet.kernels import fallback

try:
    from cameranet.kernels import _native
    HAVE_NATIVE = True
except ImportError:
    _native = None
    HAVE_NATIVE = False

BACKEND = "native" if HAVE_NATIVE and os.environ.get(
    "CAMERANET_KERNELS", "") != "python" else "python"

if BACKEND == "native":
    im2col = _native.im2col
    col2im = _native.col2im
else:
    im2col = fallback.im2col
    col2im = fallback.col2im


def get_backend(name):
    """Return (im2col, col2im) for an explicit backend name."""
    if name == "native":
        if not HAVE_NATIVE:
            raise RuntimeError("native kernels are not built")
        return _native.im2col, _native.col2im
    if name == "python":
        return fallback.im2col, fallback.col2im
    raise ValueError(f"unknown kernel backend {name!r}")

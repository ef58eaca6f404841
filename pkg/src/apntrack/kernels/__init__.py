"""Hot numeric kernels: a compiled core plus a pure-numpy fallback.

Default ("auto") picks per operation: convolution rides the BLAS-backed
im2col path, while the depthwise cross-correlation, which has no BLAS
mapping, uses the compiled loops when available. Set
``APNTRACK_KERNELS=numpy`` or ``=native`` to force one backend
wholesale; ``benchmarks/bench_kernels.py`` shows the trade-off.
"""

import os

from . import numpy_backend

try:
    from . import _native as native_backend
except ImportError:
    native_backend = None

_requested = os.environ.get("APNTRACK_KERNELS", "auto").strip().lower() or "auto"
if _requested == "numpy":
    _conv_impl = _xcorr_impl = numpy_backend
elif _requested == "native":
    if native_backend is None:
        raise ImportError(
            "APNTRACK_KERNELS=native requested but the compiled extension is "
            "not available; build it with 'pip install -e . --no-build-isolation'"
        )
    _conv_impl = _xcorr_impl = native_backend
elif _requested == "auto":
    _conv_impl = numpy_backend
    _xcorr_impl = native_backend if native_backend is not None else numpy_backend
else:
    raise ImportError(f"unknown APNTRACK_KERNELS backend {_requested!r}")

conv2d_forward = _conv_impl.conv2d_forward
conv2d_backward = _conv_impl.conv2d_backward
dwxcorr_forward = _xcorr_impl.dwxcorr_forward
dwxcorr_backward = _xcorr_impl.dwxcorr_backward
conv_output_size = numpy_backend.conv_output_size


def active_backend():
    """Selected implementation per kernel family."""
    return {"conv2d": _conv_impl.NAME, "dwxcorr": _xcorr_impl.NAME}


def available_backends():
    names = ["numpy"]
    if native_backend is not None:
        names.append("native")
    return names

"""Backend selection for the hot transposed-convolution kernels.

The compiled Cython extension is used when it imports cleanly; otherwise the
numpy fallback takes over.  ``PCVAE_KERNELS`` forces the choice:

    PCVAE_KERNELS=cython   require the extension (ImportError if missing)
    PCVAE_KERNELS=python   force the numpy fallback
    PCVAE_KERNELS=auto     default behaviour

Selection happens once at import; ``active_backend()`` reports the result.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

_choice = os.environ.get("PCVAE_KERNELS", "auto").lower()
if _choice == "cython":
    if _kernels_cy is None:
        raise ImportError("PCVAE_KERNELS=cython but the compiled extension is not available")
    _impl = _kernels_cy
elif _choice == "python":
    _impl = _kernels_np
else:
    _impl = _kernels_cy if _kernels_cy is not None else _kernels_np


def active_backend() -> str:
    return "cython" if _impl is _kernels_cy else "python"


def conv_transpose2d_shape(in_hw, kernel: int, stride: int, padding: int, output_padding: int):
    h = (in_hw[0] - 1) * stride + kernel - 2 * padding + output_padding
    w = (in_hw[1] - 1) * stride + kernel - 2 * padding + output_padding
    return h, w


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv_transpose2d_forward(x, w, stride, padding, output_padding, *, impl=None):
    impl = impl or _impl
    return impl.conv_transpose2d_forward(_c(x), _c(w), stride, padding, output_padding)


def conv_transpose2d_grad_input(gout, w, stride, padding, in_hw, *, impl=None):
    impl = impl or _impl
    if impl is _kernels_np:
        return impl.conv_transpose2d_grad_input(_c(gout), _c(w), stride, padding, in_hw)
    return impl.conv_transpose2d_grad_input(_c(gout), _c(w), stride, padding, in_hw[0], in_hw[1])


def conv_transpose2d_grad_weight(gout, x, stride, padding, kernel, *, impl=None):
    impl = impl or _impl
    return impl.conv_transpose2d_grad_weight(_c(gout), _c(x), stride, padding, kernel)


def backends():
    """Mapping of importable backend name -> module (for tests/benchmarks)."""
    found = {"python": _kernels_np}
    if _kernels_cy is not None:
        found["cython"] = _kernels_cy
    return found

"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import NumericError, UsageError
from .autodiff import Tensor


def _eval(f: Callable[[Tensor], Tensor], x: np.ndarray) -> float:
    out = f(Tensor(x))
    if out.size != 1:
        raise UsageError("grad_check needs a scalar-valued function")
    v = float(out.data)
    if not math.isfinite(v):
        raise NumericError("function evaluated to a non-finite value")
    return v


def grad_check(f: Callable[[Tensor], Tensor], point, step: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    if step <= 0:
        raise UsageError(f"step must be positive, got {step}")
    point = np.asarray(point, dtype=np.float64)
    leaf = Tensor(point.copy(), requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise UsageError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = (leaf.grad if leaf.grad is not None else np.zeros_like(point)).ravel()

    flat = point.ravel().copy()
    worst = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        fp = _eval(f, flat.reshape(point.shape))
        flat[i] = saved - step
        fm = _eval(f, flat.reshape(point.shape))
        flat[i] = saved
        numeric = (fp - fm) / (2.0 * step)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        if err > worst:
            worst = err
    return worst

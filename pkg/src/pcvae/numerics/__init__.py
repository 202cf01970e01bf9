"""Dense float64 arithmetic, seeded randomness, and reverse-mode differentiation."""

from . import autodiff
from .autodiff import (
    Tensor,
    add,
    concat,
    conv_transpose2d,
    gather2d,
    logdet_spd,
    matmul,
    mul,
    reduce_sum,
    relu,
    reshape,
    scale,
    slice1d,
    transpose,
)
from .gradcheck import grad_check
from .kernels import active_backend
from .rng import Rng, gaussian_matrix

__all__ = [
    "Tensor", "add", "concat", "conv_transpose2d", "gather2d", "logdet_spd",
    "matmul", "mul", "reduce_sum", "relu", "reshape", "scale", "slice1d",
    "transpose", "grad_check", "active_backend", "Rng", "gaussian_matrix",
]

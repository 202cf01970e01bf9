"""Vectorized numpy implementation of the transposed-convolution kernels.

This is the fallback backend; the compiled extension in ``_kernels_cy`` is
preferred when available.  Both backends implement the same three entry
points over float64 arrays:

    forward      (n, Cin, Hi, Wi) x (Cin, Cout, k, k) -> (n, Cout, Ho, Wo)
    grad_input   upstream gradient -> gradient w.r.t. the input
    grad_weight  upstream gradient -> gradient w.r.t. the kernel

with Ho = (Hi - 1) * stride + k - 2 * padding + output_padding.

The loops run over the k*k kernel offsets only; everything else is a strided
BLAS contraction, so the fallback stays usable even at full model size.
"""

from __future__ import annotations

import numpy as np


def _span(offset: int, stride: int, padding: int, n_in: int, n_out: int):
    """Input index range [i0, i1) whose output row i*stride+offset-padding is valid."""
    i0 = max(0, -((offset - padding) // stride))
    i1 = min(n_in, (n_out - 1 + padding - offset) // stride + 1)
    return i0, i1


def conv_transpose2d_forward(x, w, stride, padding, output_padding):
    n, cin, hi, wi = x.shape
    cin_w, cout, kh, kw = w.shape
    ho = (hi - 1) * stride + kh - 2 * padding + output_padding
    wo = (wi - 1) * stride + kw - 2 * padding + output_padding
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for a in range(kh):
        i0, i1 = _span(a, stride, padding, hi, ho)
        if i1 <= i0:
            continue
        for b in range(kw):
            j0, j1 = _span(b, stride, padding, wi, wo)
            if j1 <= j0:
                continue
            contrib = np.tensordot(x[:, :, i0:i1, j0:j1], w[:, :, a, b], axes=([1], [0]))
            r0 = i0 * stride + a - padding
            c0 = j0 * stride + b - padding
            out[:, :, r0 : r0 + (i1 - i0 - 1) * stride + 1 : stride,
                c0 : c0 + (j1 - j0 - 1) * stride + 1 : stride] += contrib.transpose(0, 3, 1, 2)
    return out


def conv_transpose2d_grad_input(gout, w, stride, padding, in_hw):
    n, cout, ho, wo = gout.shape
    cin, cout_w, kh, kw = w.shape
    hi, wi = in_hw
    gx = np.zeros((n, cin, hi, wi), dtype=np.float64)
    for a in range(kh):
        i0, i1 = _span(a, stride, padding, hi, ho)
        if i1 <= i0:
            continue
        for b in range(kw):
            j0, j1 = _span(b, stride, padding, wi, wo)
            if j1 <= j0:
                continue
            r0 = i0 * stride + a - padding
            c0 = j0 * stride + b - padding
            g = gout[:, :, r0 : r0 + (i1 - i0 - 1) * stride + 1 : stride,
                     c0 : c0 + (j1 - j0 - 1) * stride + 1 : stride]
            gx[:, :, i0:i1, j0:j1] += np.tensordot(g, w[:, :, a, b], axes=([1], [1])).transpose(0, 3, 1, 2)
    return gx


def conv_transpose2d_grad_weight(gout, x, stride, padding, kernel):
    n, cout, ho, wo = gout.shape
    n_x, cin, hi, wi = x.shape
    kh = kw = kernel
    gw = np.zeros((cin, cout, kh, kw), dtype=np.float64)
    for a in range(kh):
        i0, i1 = _span(a, stride, padding, hi, ho)
        if i1 <= i0:
            continue
        for b in range(kw):
            j0, j1 = _span(b, stride, padding, wi, wo)
            if j1 <= j0:
                continue
            r0 = i0 * stride + a - padding
            c0 = j0 * stride + b - padding
            g = gout[:, :, r0 : r0 + (i1 - i0 - 1) * stride + 1 : stride,
                     c0 : c0 + (j1 - j0 - 1) * stride + 1 : stride]
            gw[:, :, a, b] = np.tensordot(x[:, :, i0:i1, j0:j1], g, axes=([0, 2, 3], [0, 2, 3]))
    return gw

import numpy as np
import pytest

from pcvae.numerics import Rng, active_backend
from pcvae.numerics.kernels import backends, conv_transpose2d_shape

CASES = [
    # (n, cin, cout, hw, k, stride, padding, opad)
    (1, 1, 1, 3, 3, 1, 0, 0),
    (2, 3, 4, 4, 3, 2, 1, 1),
    (1, 2, 2, 2, 7, 8, 0, 1),
    (3, 4, 2, 5, 5, 3, 2, 2),
]


def rand(shape, seed):
    n = int(np.prod(shape))
    return (Rng(seed).uniform(n) * 2.0 - 1.0).reshape(shape)


def both():
    b = backends()
    if b["cython"] is None:
        pytest.skip("compiled backend unavailable")
    return b["python"], b["cython"]


def test_active_backend_reported():
    assert active_backend() in ("python", "cython")


@pytest.mark.parametrize("case", CASES)
def test_forward_backends_agree(case):
    py, cy = both()
    n, cin, cout, hw, k, stride, padding, opad = case
    x = rand((n, cin, hw, hw), 1)
    w = rand((cin, cout, k, k), 2)
    a = py.conv_transpose2d_forward(x, w, stride, padding, opad)
    b = cy.conv_transpose2d_forward(x, w, stride, padding, opad)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("case", CASES)
def test_grad_input_backends_agree(case):
    py, cy = both()
    n, cin, cout, hw, k, stride, padding, opad = case
    ho, wo = conv_transpose2d_shape((hw, hw), k, stride, padding, opad)
    g = rand((n, cout, ho, wo), 3)
    w = rand((cin, cout, k, k), 4)
    a = py.conv_transpose2d_grad_input(g, w, stride, padding, (hw, hw))
    b = cy.conv_transpose2d_grad_input(g, w, stride, padding, hw, hw)
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("case", CASES)
def test_grad_weight_backends_agree(case):
    py, cy = both()
    n, cin, cout, hw, k, stride, padding, opad = case
    ho, wo = conv_transpose2d_shape((hw, hw), k, stride, padding, opad)
    g = rand((n, cout, ho, wo), 5)
    x = rand((n, cin, hw, hw), 6)
    a = py.conv_transpose2d_grad_weight(g, x, stride, padding, k)
    b = cy.conv_transpose2d_grad_weight(g, x, stride, padding, k)
    assert np.max(np.abs(a - b)) < 1e-12


def test_shape_arithmetic():
    # out = (in - 1) * stride + kernel - 2 * padding + output_padding
    assert conv_transpose2d_shape((1, 1), 7, 8, 0, 1) == (8, 8)
    assert conv_transpose2d_shape((8, 8), 3, 2, 1, 1) == (16, 16)
    assert conv_transpose2d_shape((16, 16), 3, 2, 1, 1) == (32, 32)
    assert conv_transpose2d_shape((32, 32), 3, 1, 1, 0) == (32, 32)

import tracemalloc

import numpy as np
import pytest

from src.models.basis import default_basis
from src.utils.sum_factorization import (
    grad_transpose_slice,
    gradient_table,
    interpolation_table,
    naive_grad,
    naive_grad_transpose,
    sumfac_grad,
    sumfac_grad_transpose,
    sumfac_interp,
    sumfac_interp_transpose,
)

CASES = [(p, q) for p in range(1, 9) for q in (p, p + 1, p + 2)]


@pytest.mark.parametrize('p, q', CASES)
def test_gradient_matches_dense_contraction(p, q):
    basis = default_basis(p, q)
    rng = np.random.default_rng(p * 10 + q)
    u = rng.standard_normal((p + 1) ** 3)
    G = gradient_table(basis)
    expected = naive_grad(u, G)
    scale = max(1.0, np.abs(expected).max())
    np.testing.assert_allclose(sumfac_grad(u, basis), expected, atol=1e-13 * scale)


@pytest.mark.parametrize('p, q', CASES)
def test_gradient_transpose_matches_dense_contraction(p, q):
    basis = default_basis(p, q)
    rng = np.random.default_rng(p * 100 + q)
    v = rng.standard_normal((q ** 3, 3))
    G = gradient_table(basis)
    expected = naive_grad_transpose(v, G)
    scale = max(1.0, np.abs(expected).max())
    np.testing.assert_allclose(sumfac_grad_transpose(v, basis), expected, atol=1e-13 * scale)


@pytest.mark.parametrize('p, q', CASES)
def test_adjoint_identity(p, q):
    basis = default_basis(p, q)
    rng = np.random.default_rng(p + 1000 * q)
    u = rng.standard_normal((p + 1) ** 3)
    v = rng.standard_normal((q ** 3, 3))
    lhs = np.sum(v * sumfac_grad(u, basis))
    rhs = u @ sumfac_grad_transpose(v, basis)
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs)) * (p + 1) ** 3


@pytest.mark.parametrize('p', range(1, 9))
def test_interpolation_matches_table(p):
    basis = default_basis(p, p + 2)
    rng = np.random.default_rng(p)
    u = rng.standard_normal((p + 1) ** 3)
    table = interpolation_table(basis)
    np.testing.assert_allclose(sumfac_interp(u, basis), table @ u, atol=1e-13 * max(1.0, np.abs(u).sum()))
    v = rng.standard_normal((p + 2) ** 3)
    np.testing.assert_allclose(sumfac_interp_transpose(v, basis), table.T @ v, atol=1e-12)


def test_linear_field_gradient_is_constant():
    p = 3
    basis = default_basis(p)
    x = basis.nodes
    zz, yy, xx = np.meshgrid(x, x, x, indexing='ij')
    u = (2 * xx - 3 * yy + 0.5 * zz).ravel()
    g = sumfac_grad(u, basis)
    np.testing.assert_allclose(g, np.tile([2.0, -3.0, 0.5], (basis.num_points ** 3, 1)), atol=1e-12)


def test_constant_field_has_zero_gradient():
    basis = default_basis(4)
    g = sumfac_grad(np.full(125, 7.0), basis)
    np.testing.assert_allclose(g, 0.0, atol=1e-11)


def test_transpose_slice_accumulates_in_place_with_slice_sized_scratch():
    p = 8
    basis = default_basis(p)
    n1, q = basis.num_nodes, basis.num_points
    rng = np.random.default_rng(8)
    v = rng.standard_normal((200, q, q, 3))
    out = rng.standard_normal((200, n1, n1, n1))
    before = out.copy()

    tracemalloc.start()
    try:
        grad_transpose_slice(v, basis.B, basis.D, 3, out)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert peak < 0.75 * out.nbytes

    full = np.zeros((200, q, q, q, 3))
    full[:, 3] = v
    expected = before + np.stack([sumfac_grad_transpose(f.reshape(-1, 3), basis) for f in full]).reshape(out.shape)
    np.testing.assert_allclose(out, expected, atol=1e-12 * np.abs(expected).max())

from dataclasses import dataclass

import numpy as np

from src.utils.errors import InvalidArgumentError


@dataclass(frozen=True)
class QuadRule1D:
    """Quadrature on the reference interval [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Basis1D:
    """Lagrange basis on Gauss-Lobatto nodes tabulated at quadrature points.

    B[k, i] is basis function i at point k and D[k, i] its derivative.
    """

    order: int
    nodes: np.ndarray
    rule: QuadRule1D
    B: np.ndarray
    D: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.order + 1

    @property
    def num_points(self) -> int:
        return self.rule.size

    @property
    def stored_bytes(self) -> int:
        return 8 * (self.B.size + self.D.size + self.rule.points.size + self.rule.weights.size)


def _check_positive(name: str, value: int):
    if int(value) != value or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value}")


def gauss_legendre_rule(q: int) -> QuadRule1D:
    _check_positive('q', q)
    x, w = np.polynomial.legendre.leggauss(int(q))
    return QuadRule1D(points=0.5 * (x + 1.0), weights=0.5 * w)


def gauss_lobatto_nodes(p: int, tol: float = 1.0e-15, max_iter: int = 100) -> np.ndarray:
    """Zeros of (1 - x^2) P'_p(x) mapped to [0, 1], endpoints exact."""
    _check_positive('p', p)
    n = int(p)
    # Chebyshev-Gauss-Lobatto starting guess, Newton on the Legendre recurrence
    x = -np.cos(np.pi * np.arange(n + 1) / n)
    P = np.zeros((n + 1, n + 1))
    for _ in range(max_iter):
        x_old = x
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n + 1):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        x = x_old - (x * P[:, n] - P[:, n - 1]) / ((n + 1) * P[:, n])
        if np.max(np.abs(x - x_old)) < tol:
            break
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    nodes = 0.5 * (x + 1.0)
    if n % 2 == 0:
        nodes[n // 2] = 0.5
    return nodes


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """L[k, i] = l_i(points[k]) via the barycentric formula."""
    nodes = np.asarray(nodes, dtype=float)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    w = barycentric_weights(nodes)
    exact = points[:, None] == nodes[None, :]
    L = exact.astype(float)
    # rows that land on a node are already the unit row
    miss = ~exact.any(axis=1)
    terms = w[None, :] / (points[miss, None] - nodes[None, :])
    L[miss] = terms / terms.sum(axis=1, keepdims=True)
    return L


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Dn[i, j] = l_j'(nodes[i]); the diagonal is minus the off-diagonal row sum."""
    w = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    Dn = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(Dn, 0.0)
    np.fill_diagonal(Dn, -Dn.sum(axis=1))
    return Dn


def eval_basis_matrices(p: int, rule: QuadRule1D) -> Basis1D:
    _check_positive('p', p)
    nodes = gauss_lobatto_nodes(p)
    B = lagrange_matrix(nodes, rule.points)
    D = B @ differentiation_matrix(nodes)
    return Basis1D(order=int(p), nodes=nodes, rule=rule, B=B, D=D)


def default_basis(p: int, q: int = None) -> Basis1D:
    """Basis with q = p + 1 Gauss-Legendre points unless overridden."""
    return eval_basis_matrices(p, gauss_legendre_rule(p + 1 if q is None else q))

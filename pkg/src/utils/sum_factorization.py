"""
Sum-factorized tensor-product contractions on hexahedra.

Element-local scalar fields are laid out (..., n1, n1, n1) indexed [z, y, x];
quadrature-point fields are (..., q, q, q) in the same order. Each pass runs
slice by slice over the z quadrature index so that the live scratch per
element is a few 2D slices.
"""

import numpy as np

from src.models.basis import Basis1D


def grad_slice(u: np.ndarray, B: np.ndarray, D: np.ndarray, qz: int) -> np.ndarray:
    """Reference gradients on the quadrature slice qz: (..., q, q, 3) [y, x, dir]."""
    n1 = u.shape[-1]
    lead = u.shape[:-3]
    flat = u.reshape(lead + (n1, n1 * n1))
    sb = (B[qz] @ flat).reshape(lead + (n1, n1))
    sd = (D[qz] @ flat).reshape(lead + (n1, n1))
    t_b = B @ sb
    t_d = D @ sb
    t_bd = B @ sd
    return np.stack([t_b @ D.T, t_d @ B.T, t_bd @ B.T], axis=-1)


def grad_transpose_slice(v: np.ndarray, B: np.ndarray, D: np.ndarray, qz: int, out: np.ndarray):
    """out += adjoint of grad_slice applied to v (..., q, q, 3)."""
    s_b = B.T @ (v[..., 0] @ D) + D.T @ (v[..., 1] @ B)
    s_d = B.T @ (v[..., 2] @ B)
    # one z-node layer at a time; no (..., n1, n1, n1) temporary
    for iz in range(out.shape[-3]):
        layer = out[..., iz, :, :]
        layer += B[qz, iz] * s_b
        layer += D[qz, iz] * s_d


def interp_slice(u: np.ndarray, B: np.ndarray, qz: int) -> np.ndarray:
    n1 = u.shape[-1]
    lead = u.shape[:-3]
    sb = (B[qz] @ u.reshape(lead + (n1, n1 * n1))).reshape(lead + (n1, n1))
    return B @ sb @ B.T


def interp_transpose_slice(v: np.ndarray, B: np.ndarray, qz: int, out: np.ndarray):
    s = B.T @ (v @ B)
    for iz in range(out.shape[-3]):
        layer = out[..., iz, :, :]
        layer += B[qz, iz] * s


def grad_batch(u: np.ndarray, basis: Basis1D) -> np.ndarray:
    """(..., n1, n1, n1) nodal values -> (..., q, q, q, 3) reference gradients."""
    B, D = basis.B, basis.D
    return np.stack([grad_slice(u, B, D, qz) for qz in range(basis.num_points)], axis=-4)


def grad_transpose_batch(v: np.ndarray, basis: Basis1D) -> np.ndarray:
    """(..., q, q, q, 3) -> (..., n1, n1, n1), the exact adjoint of grad_batch."""
    B, D = basis.B, basis.D
    n1 = basis.num_nodes
    out = np.zeros(v.shape[:-4] + (n1, n1, n1))
    for qz in range(basis.num_points):
        grad_transpose_slice(v[..., qz, :, :, :], B, D, qz, out)
    return out


def interp_batch(u: np.ndarray, basis: Basis1D) -> np.ndarray:
    B = basis.B
    return np.stack([interp_slice(u, B, qz) for qz in range(basis.num_points)], axis=-3)


def interp_transpose_batch(v: np.ndarray, basis: Basis1D) -> np.ndarray:
    B = basis.B
    n1 = basis.num_nodes
    out = np.zeros(v.shape[:-3] + (n1, n1, n1))
    for qz in range(basis.num_points):
        interp_transpose_slice(v[..., qz, :, :], B, qz, out)
    return out


def sumfac_grad(local_u: np.ndarray, basis: Basis1D) -> np.ndarray:
    """(p+1)^3 nodal values -> (q^3, 3) reference gradients, point index qx + q*(qy + q*qz)."""
    n1 = basis.num_nodes
    g = grad_batch(np.asarray(local_u, dtype=float).reshape(n1, n1, n1), basis)
    return g.reshape(-1, 3)


def sumfac_grad_transpose(q_values: np.ndarray, basis: Basis1D) -> np.ndarray:
    q = basis.num_points
    v = np.asarray(q_values, dtype=float).reshape(q, q, q, 3)
    return grad_transpose_batch(v, basis).ravel()


def sumfac_interp(local_u: np.ndarray, basis: Basis1D) -> np.ndarray:
    n1 = basis.num_nodes
    return interp_batch(np.asarray(local_u, dtype=float).reshape(n1, n1, n1), basis).ravel()


def sumfac_interp_transpose(q_values: np.ndarray, basis: Basis1D) -> np.ndarray:
    q = basis.num_points
    return interp_transpose_batch(np.asarray(q_values, dtype=float).reshape(q, q, q), basis).ravel()


def gradient_table(basis: Basis1D) -> np.ndarray:
    """Dense G[point, direction, node] with point = qx + q*(qy + q*qz), node = ix + n1*(iy + n1*iz)."""
    B, D = basis.B, basis.D
    q, n1 = B.shape
    shape = (q ** 3, n1 ** 3)
    gx = np.einsum('ai,bj,ck->abcijk', B, B, D).reshape(shape)
    gy = np.einsum('ai,bj,ck->abcijk', B, D, B).reshape(shape)
    gz = np.einsum('ai,bj,ck->abcijk', D, B, B).reshape(shape)
    return np.stack([gx, gy, gz], axis=1)


def interpolation_table(basis: Basis1D) -> np.ndarray:
    B = basis.B
    q, n1 = B.shape
    return np.einsum('ai,bj,ck->abcijk', B, B, B).reshape(q ** 3, n1 ** 3)


def naive_grad(local_u: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Reference gradients by the dense O((p+1)^6) contraction."""
    return np.einsum('pmi,i->pm', table, local_u)


def naive_grad_transpose(q_values: np.ndarray, table: np.ndarray) -> np.ndarray:
    return np.einsum('pmi,pm->i', table, q_values)


def quadrature_weights_3d(basis: Basis1D) -> np.ndarray:
    w = basis.rule.weights
    return np.einsum('a,b,c->abc', w, w, w).ravel()

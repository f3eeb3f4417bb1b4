import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.models.basis import Basis1D, QuadRule1D, eval_basis_matrices
from src.models.space import FESpace
from src.utils.errors import GeometryError
from src.utils.sum_factorization import grad_batch, quadrature_weights_3d

logger = logging.getLogger(__name__)


@dataclass
class GeometryFactors:
    """Per element and quadrature point: J, det J, J^-T and the point weight."""

    J: np.ndarray          # (E, Q, 3, 3), J[c, m] = dx_c / dxi_m
    detJ: np.ndarray       # (E, Q)
    invJT: np.ndarray      # (E, Q, 3, 3)
    weights: np.ndarray    # (Q,)

    @property
    def wdetJ(self) -> np.ndarray:
        return self.weights[None, :] * self.detJ

    @property
    def invJ(self) -> np.ndarray:
        return np.swapaxes(self.invJT, -1, -2)

    @property
    def stored_bytes(self) -> int:
        # J^-T and w*detJ are what the kernels read
        return 8 * (self.invJT.size + self.detJ.size)


def invert_3x3(J: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Batched cofactor inverse; returns (J^-1, det J)."""
    a, b, c = J[..., 0, 0], J[..., 0, 1], J[..., 0, 2]
    d, e, f = J[..., 1, 0], J[..., 1, 1], J[..., 1, 2]
    g, h, i = J[..., 2, 0], J[..., 2, 1], J[..., 2, 2]
    c00 = e * i - f * h
    c01 = f * g - d * i
    c02 = d * h - e * g
    det = a * c00 + b * c01 + c * c02
    inv = np.empty(J.shape)
    inv[..., 0, 0] = c00
    inv[..., 1, 0] = c01
    inv[..., 2, 0] = c02
    inv[..., 0, 1] = c * h - b * i
    inv[..., 1, 1] = a * i - c * g
    inv[..., 2, 1] = b * g - a * h
    inv[..., 0, 2] = b * f - c * e
    inv[..., 1, 2] = c * d - a * f
    inv[..., 2, 2] = a * e - b * d
    with np.errstate(divide='ignore', invalid='ignore'):
        inv /= det[..., None, None]
    return inv, det


def jacobian_from_nodes(coords: np.ndarray, basis: Basis1D) -> np.ndarray:
    """(e, 3, n1, n1, n1) nodal coordinates -> (e, Q, 3, 3) Jacobians, J[c, m] = dx_c / dxi_m."""
    grads = grad_batch(coords, basis)                       # (e, 3[c], q, q, q, 3[m])
    e = coords.shape[0]
    return np.moveaxis(grads, 1, -2).reshape(e, -1, 3, 3)


def check_positive(detJ: np.ndarray, context: str = ''):
    if np.any(detJ <= 0):
        worst = float(np.min(detJ))
        raise GeometryError(f"Degenerate element Jacobian{context}: min det J = {worst:.3e}")


def compute_geometry_factors(space: FESpace, rule: QuadRule1D) -> GeometryFactors:
    """Trilinear map of each hexahedron evaluated at every quadrature point."""
    mesh = space.mesh
    linear = eval_basis_matrices(1, rule)
    corners = mesh.element_vertices()                       # (E, 2, 2, 2, 3)
    J = jacobian_from_nodes(np.moveaxis(corners, -1, 1), linear)
    E, Q = J.shape[:2]
    invJ, detJ = invert_3x3(J)
    check_positive(detJ)
    logger.debug(f"Geometry factors for {E} elements x {Q} points")
    return GeometryFactors(
        J=J,
        detJ=detJ,
        invJT=np.swapaxes(invJ, -1, -2),
        weights=quadrature_weights_3d(linear),
    )

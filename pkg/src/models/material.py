from typing import Optional, Tuple

import numpy as np

from src.utils.errors import InvalidArgumentError

# Voigt order [11, 22, 33, 23, 13, 12]
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
VOIGT_INDEX = np.array([[0, 5, 4],
                        [5, 1, 3],
                        [4, 3, 2]])


class VoigtMaterial:
    """Linear elastic material, isotropic (lam, mu) or anisotropic 6x6 C.

    Parameters may be constant (scalar / (6, 6)), per element ((E,) / (E, 6, 6))
    or per quadrature point ((E, Q) / (E, Q, 6, 6)).
    """

    def __init__(self, lam=None, mu=None, C=None):
        if C is not None:
            if lam is not None or mu is not None:
                raise InvalidArgumentError("Give either (lam, mu) or C, not both")
            self.kind = 'anisotropic'
            self.C = np.asarray(C, dtype=float)
            self.lam = self.mu = None
            self._validate_anisotropic()
            self.scope = {2: 'constant', 3: 'element', 4: 'point'}[self.C.ndim]
        else:
            self.kind = 'isotropic'
            self.lam = np.asarray(1.0 if lam is None else lam, dtype=float)
            self.mu = np.asarray(1.0 if mu is None else mu, dtype=float)
            self.C = None
            self._validate_isotropic()
            ndim = max(self.lam.ndim, self.mu.ndim)
            self.scope = {0: 'constant', 1: 'element', 2: 'point'}[ndim]

    @property
    def is_isotropic(self) -> bool:
        return self.kind == 'isotropic'

    def _validate_isotropic(self):
        if max(self.lam.ndim, self.mu.ndim) > 2:
            raise InvalidArgumentError("lam/mu must be scalar, per element (E,) or per point (E, Q)")
        if not (np.all(np.isfinite(self.lam)) and np.all(np.isfinite(self.mu))):
            raise InvalidArgumentError("Lame parameters must be finite")
        if np.any(self.mu <= 0):
            raise InvalidArgumentError("mu must be positive")
        if np.any(3 * self.lam + 2 * self.mu <= 0):
            raise InvalidArgumentError("3*lam + 2*mu must be positive")

    def _validate_anisotropic(self):
        C = self.C
        if C.ndim not in (2, 3, 4) or C.shape[-2:] != (6, 6):
            raise InvalidArgumentError(f"C must have trailing shape (6, 6), got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise InvalidArgumentError("C must be finite")
        scale = np.max(np.abs(C))
        if np.max(np.abs(C - np.swapaxes(C, -1, -2))) > 1e-14 * max(scale, 1.0):
            raise InvalidArgumentError("C must be symmetric")
        if np.any(np.linalg.eigvalsh(C) <= 0):
            raise InvalidArgumentError("C must be positive definite")

    def check_layout(self, num_elements: int, num_points: int):
        """Raise if per-element / per-point data does not match the mesh."""
        shapes = [self.C.shape[:-2]] if self.C is not None else [self.lam.shape, self.mu.shape]
        for shape in shapes:
            if len(shape) >= 1 and shape[0] != num_elements:
                raise InvalidArgumentError(f"Material has {shape[0]} elements, mesh has {num_elements}")
            if len(shape) == 2 and shape[1] != num_points:
                raise InvalidArgumentError(f"Material has {shape[1]} points per element, rule has {num_points}")

    @staticmethod
    def _expand(values: np.ndarray, elements: np.ndarray, num_points: int, trailing: int = 0) -> np.ndarray:
        base = values.ndim - trailing
        if base == 0:
            values = values[None, None]
        elif base == 1:
            values = values[elements][:, None]
        else:
            values = values[elements]
        target = (len(elements), num_points) + values.shape[2:]
        return np.broadcast_to(values, target)

    def lame(self, elements: np.ndarray, num_points: int) -> Tuple[np.ndarray, np.ndarray]:
        """(lam, mu) as (e, Q) arrays for the given elements."""
        return (self._expand(self.lam, elements, num_points),
                self._expand(self.mu, elements, num_points))

    def stiffness_voigt(self, elements: np.ndarray, num_points: int) -> np.ndarray:
        """(e, Q, 6, 6) Voigt stiffness for the given elements."""
        if self.C is not None:
            return self._expand(self.C, elements, num_points, trailing=2)
        lam, mu = self.lame(elements, num_points)
        return isotropic_stiffness(lam, mu)

    def stiffness_tensor(self, elements: np.ndarray, num_points: int) -> np.ndarray:
        """(e, Q, 3, 3, 3, 3) fourth-order stiffness."""
        return voigt_to_tensor(self.stiffness_voigt(elements, num_points))

    @property
    def stored_bytes(self) -> int:
        if self.C is not None:
            return self.C.nbytes
        return self.lam.nbytes + self.mu.nbytes

    def describe(self) -> str:
        if self.is_isotropic:
            return f"isotropic ({self.scope}), lam in [{self.lam.min():g}, {self.lam.max():g}], mu in [{self.mu.min():g}, {self.mu.max():g}]"
        return f"anisotropic ({self.scope})"


def isotropic_stiffness(lam, mu) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    shape = np.broadcast(lam, mu).shape
    C = np.zeros(shape + (6, 6))
    C[..., :3, :3] = lam[..., None, None]
    for i in range(3):
        C[..., i, i] += 2 * mu
        C[..., 3 + i, 3 + i] = mu
    return C


def voigt_to_tensor(C6: np.ndarray) -> np.ndarray:
    """C4[..., i, j, k, l] = C6[..., V(ij), V(kl)]."""
    idx = VOIGT_INDEX
    return C6[..., idx[:, :, None, None], idx[None, None, :, :]]


def strain_from_grad(grad: np.ndarray) -> np.ndarray:
    """Voigt engineering strain [e11, e22, e33, 2e23, 2e13, 2e12] of grad[..., i, j] = du_i/dx_j."""
    g = np.asarray(grad, dtype=float)
    return np.stack([
        g[..., 0, 0],
        g[..., 1, 1],
        g[..., 2, 2],
        g[..., 1, 2] + g[..., 2, 1],
        g[..., 0, 2] + g[..., 2, 0],
        g[..., 0, 1] + g[..., 1, 0],
    ], axis=-1)


def isotropic_voigt_stress(strain: np.ndarray, lam, mu) -> np.ndarray:
    """Hooke's law in Voigt form without the zero blocks of the 6x6 matrix."""
    e = strain
    lam_tr = lam * (e[..., 0] + e[..., 1] + e[..., 2])
    two_mu = 2.0 * mu
    return np.stack([
        two_mu * e[..., 0] + lam_tr,
        two_mu * e[..., 1] + lam_tr,
        two_mu * e[..., 2] + lam_tr,
        mu * e[..., 3],
        mu * e[..., 4],
        mu * e[..., 5],
    ], axis=-1)


def dense_voigt_stress(strain: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.einsum('...ij,...j->...i', C, strain)


def voigt_stress(strain: np.ndarray, mat: VoigtMaterial,
                 elements: Optional[np.ndarray] = None, num_points: Optional[int] = None) -> np.ndarray:
    """sigma = C eps; constant materials need no element/point context."""
    strain = np.asarray(strain, dtype=float)
    if mat.scope == 'constant':
        if mat.is_isotropic:
            return isotropic_voigt_stress(strain, mat.lam, mat.mu)
        return dense_voigt_stress(strain, mat.C)
    if elements is None or num_points is None:
        raise InvalidArgumentError("Spatially varying material needs elements and num_points")
    if mat.is_isotropic:
        lam, mu = mat.lame(elements, num_points)
        return isotropic_voigt_stress(strain, lam, mu)
    return dense_voigt_stress(strain, mat.stiffness_voigt(elements, num_points))


def stress_full_tensor(grad: np.ndarray, lam, mu) -> np.ndarray:
    """lam tr(grad) I + mu (grad + grad^T)."""
    g = np.asarray(grad, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    tr = g[..., 0, 0] + g[..., 1, 1] + g[..., 2, 2]
    sigma = mu[..., None, None] * (g + np.swapaxes(g, -1, -2))
    sigma = sigma + np.asarray(lam * tr)[..., None, None] * np.eye(3)
    return sigma


def voigt_to_matrix(voigt: np.ndarray) -> np.ndarray:
    """Expand a Voigt stress [s11, s22, s33, s23, s13, s12] to a symmetric 3x3 matrix."""
    return np.asarray(voigt)[..., VOIGT_INDEX]


def strain_energy_density(strain: np.ndarray, mat: VoigtMaterial) -> np.ndarray:
    """eps . sigma (twice the physical energy density)."""
    return np.sum(strain * voigt_stress(strain, mat), axis=-1)

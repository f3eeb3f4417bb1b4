"""
Closed-form FLOP and memory-traffic model for the operator kernels.

Flops count a fused multiply-add as 2. Bytes follow an ideal streaming model:
every array a kernel touches is read (or written) once per application at
8 bytes per value; nothing is assumed to stay in cache between kernels.
Element-local vectors (x gathered, y scattered) are counted per element.
"""

from typing import Dict

from src.utils.errors import InvalidArgumentError

KERNEL_STAGES = ('baseline', 'sumfac', 'voigt', 'fused')

# per quadrature point
PHYSICAL_GRADIENT = 54      # 3x3 @ 3x3
STRESS_TRANSFORM = 54       # sigma @ J^-T
FULL_STRESS_ISO = 24        # trace 2, lam*tr 1, g+g^T 9, *mu 9, diagonal 3
FULL_STRESS_ANISO = 162     # C4 : grad, 81 FMAs
VOIGT_STRAIN = 3            # three shear sums
VOIGT_STRESS_ISO = 13       # trace 2, lam*tr 1, 2mu 1, 3 FMAs, 3 shear products
VOIGT_STRESS_DENSE = 72     # 6x6 mat-vec
FULL_SCALE = 10             # w*detJ then 9 products
VOIGT_SCALE = 7             # w*detJ then 6 products
GEOMETRY_INVERSE = 42       # cofactors 27, det 5, reciprocal 1, scaling 9

DOUBLE = 8
INDEX = 4

# lowest order at which flops are non-increasing along KERNEL_STAGES; for linear
# elements sum factorization saves nothing and per-point geometry is a net cost
ABLATION_MONOTONE_FROM = 2


def _check(p: int, q: int):
    if p < 1 or q < 1:
        raise InvalidArgumentError(f"p and q must be >= 1, got p={p}, q={q}")


def sumfac_pass_fmas(p: int, q: int) -> int:
    """FMAs of one slice-wise gradient pass (or its transpose) on one scalar field."""
    _check(p, q)
    n1 = p + 1
    return q * (2 * n1 ** 3 + 3 * q * n1 ** 2 + 3 * q * q * n1)


def interp_pass_fmas(p: int, q: int) -> int:
    _check(p, q)
    n1 = p + 1
    return q * (n1 ** 3 + q * n1 ** 2 + q * q * n1)


def dense_grad_fmas(p: int, q: int) -> int:
    """One application of the stored G table to a 3-component element vector."""
    _check(p, q)
    return 3 * (p + 1) ** 3 * 3 * q ** 3


def pa_kernel2_flops(p: int, q: int) -> int:
    return 2 * dense_grad_fmas(p, q)


def point_flops(stage: str, isotropic: bool = True) -> int:
    if stage not in KERNEL_STAGES:
        raise InvalidArgumentError(f"Unknown kernel stage '{stage}'")
    if stage in ('baseline', 'sumfac'):
        stress = FULL_STRESS_ISO if isotropic else FULL_STRESS_ANISO
        flops = PHYSICAL_GRADIENT + stress + FULL_SCALE + STRESS_TRANSFORM
    else:
        stress = VOIGT_STRESS_ISO if isotropic else VOIGT_STRESS_DENSE
        flops = PHYSICAL_GRADIENT + VOIGT_STRAIN + stress + VOIGT_SCALE + STRESS_TRANSFORM
    if stage != 'baseline':
        flops += GEOMETRY_INVERSE
    return flops


def element_flops(stage: str, p: int, q: int, isotropic: bool = True) -> int:
    """Flops per element for one operator application."""
    _check(p, q)
    n = (p + 1) ** 3
    Q = q ** 3
    scatter = 3 * n
    if stage == 'baseline':
        interpolation = 2 * pa_kernel2_flops(p, q)
    else:
        # 3 displacement components forward + transpose, 3 coordinate components forward
        interpolation = 9 * 2 * sumfac_pass_fmas(p, q)
    return interpolation + Q * point_flops(stage, isotropic) + scatter


def element_bytes(stage: str, p: int, q: int) -> int:
    """Modeled main-memory bytes per element for one operator application."""
    _check(p, q)
    if stage not in KERNEL_STAGES:
        raise InvalidArgumentError(f"Unknown kernel stage '{stage}'")
    n = (p + 1) ** 3
    Q = q ** 3
    vectors = 2 * 3 * n * DOUBLE
    if stage == 'baseline':
        g_table = 2 * 3 * n * Q * DOUBLE
        qvec = 2 * 9 * Q * DOUBLE
        geometry = 10 * Q * DOUBLE
        return vectors + g_table + qvec + geometry
    coordinates = 3 * n * DOUBLE
    if stage in ('sumfac', 'voigt'):
        return vectors + coordinates + 2 * 9 * Q * DOUBLE
    return vectors + coordinates


def operational_intensity(flops: int, bytes_moved: int) -> float:
    return flops / bytes_moved if bytes_moved > 0 else 0.0


def stage_intensity(stage: str, p: int, q: int, isotropic: bool = True) -> float:
    return operational_intensity(element_flops(stage, p, q, isotropic), element_bytes(stage, p, q))


def fa_flops(nnz: int) -> int:
    return 2 * nnz


def fa_bytes(nnz: int, ndof: int) -> int:
    return (DOUBLE + INDEX) * nnz + INDEX * (ndof + 1) + 2 * DOUBLE * ndof


def fa_nnz(cells, p: int) -> int:
    """Exact stored entries of the assembled vector stiffness matrix on a box mesh."""
    n1 = p + 1
    scalar = 1
    for c in cells:
        scalar *= c * n1 * n1 - (c - 1)
    return 9 * scalar


def fa_stored_bytes(nnz: int, ndof: int) -> int:
    return (DOUBLE + INDEX) * nnz + INDEX * (ndof + 1)


def fa_build_estimate(cells, p: int) -> int:
    """Peak bytes of a Full Assembly build: COO triplets plus the final CSR."""
    n = (p + 1) ** 3
    num_elements = 1
    scalar_ndof = 1
    for c in cells:
        num_elements *= c
        scalar_ndof *= p * c + 1
    triplets = num_elements * (3 * n) ** 2 * 3 * DOUBLE
    return triplets + fa_stored_bytes(fa_nnz(cells, p), 3 * scalar_ndof)


def basis_bytes(p: int, q: int) -> int:
    return DOUBLE * (2 * q * (p + 1) + 2 * q)


def pa_stored_bytes(stage: str, p: int, q: int, num_elements: int, vector_ndof: int) -> int:
    """Analytic storage of a partial-assembly operator's precomputed data."""
    n = (p + 1) ** 3
    Q = q ** 3
    if stage == 'baseline':
        return DOUBLE * (3 * n * Q + 9 * Q * num_elements + 10 * Q * num_elements)
    coordinates = DOUBLE * vector_ndof
    if stage in ('sumfac', 'voigt'):
        return basis_bytes(p, q) + coordinates + DOUBLE * 9 * Q * num_elements
    return basis_bytes(p, q) + coordinates


def fused_scratch_values(p: int, q: int) -> int:
    """Per-element scratch of one slice of the fused kernel, in values."""
    n1 = p + 1
    m = max(n1, q)
    # u and coordinate slices (2 per field), three partial sums, gradients and stress on a q x q slice
    return 6 * 2 * m * m + 6 * 3 * m * m + (9 + 9 + 6 + 9) * q * q


def counts_table(p_values, isotropic: bool = True) -> Dict[int, Dict[str, int]]:
    """Per-element flops for every stage, q = p + 1."""
    return {p: {stage: element_flops(stage, p, p + 1, isotropic) for stage in KERNEL_STAGES} for p in p_values}


def ablation_is_monotone(p: int, isotropic: bool = True) -> bool:
    counts = counts_table([p], isotropic)[p]
    flops = [counts[stage] for stage in KERNEL_STAGES]
    return all(b <= a for a, b in zip(flops, flops[1:]))

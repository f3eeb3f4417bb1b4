import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from config.settings import load_settings
from src.models.basis import Basis1D, QuadRule1D, default_basis, eval_basis_matrices
from src.models.material import (
    VOIGT_PAIRS,
    VoigtMaterial,
    dense_voigt_stress,
    isotropic_voigt_stress,
    stress_full_tensor,
    strain_from_grad,
    voigt_to_matrix,
)
from src.models.space import VDIM, BcConstraint, FESpace
from src.utils import flop_model
from src.utils.errors import InvalidArgumentError, OperatorMemoryError
from src.utils.geometry import (
    GeometryFactors,
    check_positive,
    compute_geometry_factors,
    invert_3x3,
    jacobian_from_nodes,
)
from src.utils.sum_factorization import (
    grad_batch,
    grad_slice,
    grad_transpose_batch,
    grad_transpose_slice,
    gradient_table,
    quadrature_weights_3d,
)

logger = logging.getLogger(__name__)

ASSEMBLY_VARIANTS = ('fa', 'pa', 'paop')
DEFAULT_KERNEL = {'pa': 'baseline', 'paop': 'fused'}
# values of the dense per-element gradient table processed at once by setup loops
SETUP_BLOCK_VALUES = 4_000_000


@dataclass
class CounterReport:
    flops: int
    bytes_model: int
    applications: int

    @property
    def operational_intensity(self) -> float:
        return flop_model.operational_intensity(self.flops, self.bytes_model)

    def per_apply(self) -> 'CounterReport':
        if self.applications == 0:
            return CounterReport(0, 0, 0)
        return CounterReport(self.flops // self.applications, self.bytes_model // self.applications, 1)


class OperatorBase:
    """Linear map on a vector space with accumulating application y += A x."""

    variant = 'abstract'

    def __init__(self, ndof: int):
        self.ndof = ndof

    @property
    def shape(self):
        return (self.ndof, self.ndof)

    def _check_vectors(self, x: np.ndarray, y: np.ndarray):
        if x.shape != (self.ndof,) or y.shape != (self.ndof,):
            raise InvalidArgumentError(
                f"Operator of size {self.ndof} applied to shapes {x.shape} -> {y.shape}"
            )
        if not y.flags['C_CONTIGUOUS']:
            raise InvalidArgumentError("Output vector must be contiguous")

    def add_mult(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mult(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.zeros(self.ndof)
        return self.add_mult(x, y)

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.mult(x)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.mult, rmatvec=self.mult, dtype=float)


class ElasticOperator(OperatorBase):
    """Shared plumbing of the three operator realizations: counters, chunking, threads."""

    stage = None

    def __init__(self, space: FESpace, material: VoigtMaterial, basis: Basis1D,
                 threads: int = 1, chunk_size: Optional[int] = None):
        super().__init__(space.vector_ndof)
        if threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {threads}")
        self.space = space
        self.material = material
        self.basis = basis
        self.threads = int(threads)
        self.chunk_size = int(chunk_size or load_settings().element_chunk)
        self.num_points = basis.num_points ** 3
        material.check_layout(space.num_elements, self.num_points)
        self._flops = 0
        self._bytes = 0
        self._applications = 0
        self._counter_lock = threading.Lock()
        self._diagonal = None
        self._chunks = self._split(np.arange(space.num_elements))
        colors = space.element_colors()
        self._color_chunks = [self._split(np.flatnonzero(colors == c)) for c in range(8)]

    def _split(self, elements: np.ndarray) -> List[np.ndarray]:
        return [elements[i:i + self.chunk_size] for i in range(0, len(elements), self.chunk_size)]

    def _run(self, tasks: List[Callable[[], None]]):
        """Run independent element-chunk tasks, in parallel when threads > 1."""
        if self.threads == 1 or len(tasks) <= 1:
            for task in tasks:
                task()
            return
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = [executor.submit(task) for task in tasks]
            for future in as_completed(futures):
                future.result()

    def _scatter(self, local: np.ndarray, elements: np.ndarray, y: np.ndarray):
        """Scatter (e, 3, n) values for elements of one color: no DOF repeats."""
        dofs = self.space.dofmap[elements]
        target = y.reshape(VDIM, self.space.scalar_ndof)
        for c in range(VDIM):
            target[c, dofs] += local[:, c, :]

    def _count(self):
        with self._counter_lock:
            self._flops += self.flops_per_apply()
            self._bytes += self.bytes_per_apply()
            self._applications += 1

    def add_mult(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check_vectors(x, y)
        self._apply(x, y)
        self._count()
        return y

    def _apply(self, x: np.ndarray, y: np.ndarray):
        raise NotImplementedError

    def flops_per_apply(self) -> int:
        return self.space.num_elements * flop_model.element_flops(
            self.stage, self.space.order, self.basis.num_points, self.material.is_isotropic)

    def bytes_per_apply(self) -> int:
        return self.space.num_elements * flop_model.element_bytes(
            self.stage, self.space.order, self.basis.num_points)

    def counters(self) -> CounterReport:
        return CounterReport(self._flops, self._bytes, self._applications)

    def reset_counters(self):
        with self._counter_lock:
            self._flops = self._bytes = self._applications = 0

    def stored_bytes(self) -> int:
        return flop_model.pa_stored_bytes(
            self.stage, self.space.order, self.basis.num_points,
            self.space.num_elements, self.space.vector_ndof,
        ) + (self.material.stored_bytes if self.material.scope != 'constant' else 0)

    @property
    def label(self) -> str:
        return self.variant if self.stage in (None, 'baseline', 'fused') else f"pa-{self.stage}"

    def _full_stress(self, grad: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Full 3x3 stress at (e, Q) points."""
        if self.material.is_isotropic:
            lam, mu = self.material.lame(elements, self.num_points)
            return stress_full_tensor(grad, lam, mu)
        C4 = self.material.stiffness_tensor(elements, self.num_points)
        return np.einsum('epijkl,epkl->epij', C4, grad)

    def _point_voigt_stress(self, strain: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Voigt stress at (e, Q) points."""
        if self.material.is_isotropic:
            lam, mu = self.material.lame(elements, self.num_points)
            return isotropic_voigt_stress(strain, lam, mu)
        return dense_voigt_stress(strain, self.material.stiffness_voigt(elements, self.num_points))

    # diagonal

    def _geometry(self, elements: np.ndarray):
        """(J^-1, w*detJ) at every point of the given elements."""
        raise NotImplementedError

    def assemble_diagonal(self) -> np.ndarray:
        if self._diagonal is None:
            self._diagonal = self._compute_diagonal()
        return self._diagonal.copy()

    def _compute_diagonal(self) -> np.ndarray:
        G = gradient_table(self.basis)
        n = self.space.nodes_per_element
        block = max(1, SETUP_BLOCK_VALUES // (self.num_points * 3 * n))
        diag = np.zeros(self.ndof)
        for start in range(0, self.space.num_elements, block):
            elements = np.arange(start, min(start + block, self.space.num_elements))
            invJ, wdetJ = self._geometry(elements)
            Gphys = np.einsum('epmd,pmi->epdi', invJ, G)
            C4 = self.material.stiffness_tensor(elements, self.num_points)
            local = np.empty((len(elements), VDIM, n))
            for c in range(VDIM):
                Cc = C4[:, :, c, :, c, :] * wdetJ[:, :, None, None]
                local[:, c, :] = np.einsum('epdi,epdk,epki->ei', Gphys, Cc, Gphys)
            self.space.scatter_add_elements(local, diag, elements)
        return diag

    def norm_estimate(self) -> float:
        return float(np.max(self.assemble_diagonal()))


class FullAssemblyOperator(ElasticOperator):
    """Global CSR stiffness matrix; action is a sparse mat-vec."""

    variant = 'fa'

    def __init__(self, space: FESpace, material: VoigtMaterial, basis: Basis1D,
                 matrix: sp.csr_matrix, threads: int = 1, chunk_size: Optional[int] = None):
        super().__init__(space, material, basis, threads, chunk_size)
        self.matrix = matrix

    def _apply(self, x: np.ndarray, y: np.ndarray):
        y += self.matrix @ x

    def flops_per_apply(self) -> int:
        return flop_model.fa_flops(self.matrix.nnz)

    def bytes_per_apply(self) -> int:
        return flop_model.fa_bytes(self.matrix.nnz, self.ndof)

    def stored_bytes(self) -> int:
        return flop_model.fa_stored_bytes(self.matrix.nnz, self.ndof)

    def assemble_diagonal(self) -> np.ndarray:
        return self.matrix.diagonal().copy()

    @property
    def label(self) -> str:
        return 'fa'


def _element_matrices(space: FESpace, material: VoigtMaterial, G: np.ndarray,
                      geometry: GeometryFactors, elements: np.ndarray) -> np.ndarray:
    """(e, 3n, 3n) element stiffness matrices, local index = component * n + node."""
    e = len(elements)
    n = space.nodes_per_element
    Q = G.shape[0]
    Gphys = np.einsum('epmd,pmi->epdi', geometry.invJ[elements], G)
    Bv = np.zeros((e, Q, 6, VDIM, n))
    for v, (a, b) in enumerate(VOIGT_PAIRS):
        Bv[:, :, v, a, :] += Gphys[:, :, b, :]
        if a != b:
            Bv[:, :, v, b, :] += Gphys[:, :, a, :]
    Bv = Bv.reshape(e, Q, 6, VDIM * n)
    C6 = material.stiffness_voigt(elements, Q) * geometry.wdetJ[elements][:, :, None, None]
    CB = C6 @ Bv
    Ke = np.swapaxes(Bv.reshape(e, Q * 6, VDIM * n), 1, 2) @ CB.reshape(e, Q * 6, VDIM * n)
    return 0.5 * (Ke + np.swapaxes(Ke, 1, 2))


def assemble_fa(space: FESpace, material: VoigtMaterial, rule: Optional[QuadRule1D] = None,
                memory_cap_bytes: Optional[int] = None, threads: int = 1,
                chunk_size: Optional[int] = None) -> FullAssemblyOperator:
    """Element-by-element assembly of the global stiffness matrix."""
    settings = load_settings()
    cap = memory_cap_bytes if memory_cap_bytes is not None else settings.fa_memory_cap_bytes
    estimate = flop_model.fa_build_estimate(space.mesh.cells, space.order)
    if estimate > cap:
        raise OperatorMemoryError(estimate, cap)

    basis = eval_basis_matrices(space.order, rule) if rule is not None else default_basis(space.order)
    material.check_layout(space.num_elements, basis.num_points ** 3)
    geometry = compute_geometry_factors(space, basis.rule)
    G = gradient_table(basis)
    n = space.nodes_per_element
    local_dofs = np.concatenate(
        [c * space.scalar_ndof + space.dofmap for c in range(VDIM)], axis=1)    # (E, 3n)

    block = max(1, SETUP_BLOCK_VALUES // (G.shape[0] * 18 * n))
    rows, cols, vals = [], [], []
    for start in range(0, space.num_elements, block):
        elements = np.arange(start, min(start + block, space.num_elements))
        Ke = _element_matrices(space, material, G, geometry, elements)
        ldofs = local_dofs[elements]
        rows.append(np.repeat(ldofs, VDIM * n, axis=1).ravel())
        cols.append(np.tile(ldofs, (1, VDIM * n)).ravel())
        vals.append(Ke.ravel())

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.vector_ndof, space.vector_ndof),
    ).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    logger.info(f"Assembled FA matrix: {space.vector_ndof} DOFs, {matrix.nnz} nonzeros")
    return FullAssemblyOperator(space, material, basis, matrix, threads, chunk_size)


def spmv(fa_operator: FullAssemblyOperator, x: np.ndarray) -> np.ndarray:
    matrix = fa_operator.matrix if isinstance(fa_operator, FullAssemblyOperator) else fa_operator
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"Matrix of shape {matrix.shape} applied to vector of shape {x.shape}")
    if isinstance(fa_operator, FullAssemblyOperator):
        return fa_operator.mult(x)
    return matrix @ x


class PartialAssemblyOperator(ElasticOperator):
    """Two-kernel baseline: dense G table and a global per-point QVec.

    Kernel 1 writes w det(J) sigma J^-T for every point of every element into
    QVec; kernel 2 reads it back and contracts it with G.
    """

    variant = 'pa'
    stage = 'baseline'

    def __init__(self, space: FESpace, material: VoigtMaterial, basis: Basis1D,
                 threads: int = 1, chunk_size: Optional[int] = None):
        super().__init__(space, material, basis, threads, chunk_size)
        self.geometry = compute_geometry_factors(space, basis.rule)
        self.G = gradient_table(basis)
        self._G_flat = self.G.reshape(self.num_points * 3, space.nodes_per_element)
        self.qvec = np.zeros((space.num_elements, self.num_points, 3, 3))
        self._apply_lock = threading.Lock()

    def _geometry(self, elements: np.ndarray):
        return self.geometry.invJ[elements], self.geometry.wdetJ[elements]

    def _kernel1(self, elements: np.ndarray, x: np.ndarray):
        e = len(elements)
        u = self.space.gather_elements(x, elements)
        g = (u @ self._G_flat.T).reshape(e, VDIM, self.num_points, 3).transpose(0, 2, 1, 3)
        invJ, wdetJ = self._geometry(elements)
        sigma = self._full_stress(g @ invJ, elements)
        self.qvec[elements] = wdetJ[:, :, None, None] * (sigma @ self.geometry.invJT[elements])

    def _kernel2(self, elements: np.ndarray, y: np.ndarray):
        e = len(elements)
        v = self.qvec[elements].transpose(0, 2, 1, 3).reshape(e, VDIM, self.num_points * 3)
        self._scatter(v @ self._G_flat, elements, y)

    def _apply(self, x: np.ndarray, y: np.ndarray):
        with self._apply_lock:
            self._run([partial(self._kernel1, els, x) for els in self._chunks])
            for chunks in self._color_chunks:
                self._run([partial(self._kernel2, els, y) for els in chunks])


class SumFactorizedOperator(ElasticOperator):
    """Partial assembly on sum-factorized kernels.

    Stages: 'sumfac' and 'voigt' keep two kernels around a global 9-value
    QVec; 'fused' (PAop) runs one slice-wise element pass with a 6-value
    per-point Voigt buffer. Geometry is evaluated at each point from the
    stored nodal coordinate field.
    """

    STAGES = ('sumfac', 'voigt', 'fused')

    def __init__(self, space: FESpace, material: VoigtMaterial, basis: Basis1D,
                 stage: str = 'fused', threads: int = 1, chunk_size: Optional[int] = None):
        if stage not in self.STAGES:
            raise InvalidArgumentError(f"Unknown sum-factorized stage '{stage}'")
        super().__init__(space, material, basis, threads, chunk_size)
        self.stage = stage
        self.variant = 'paop' if stage == 'fused' else 'pa'
        self.coordinates = np.ascontiguousarray(space.node_coordinates().T).ravel()
        self.weights = quadrature_weights_3d(basis)
        self.qvec = None
        if stage != 'fused':
            self.qvec = np.zeros((space.num_elements, self.num_points, 3, 3))
        self._apply_lock = threading.Lock()

    @property
    def scratch_values_per_element(self) -> int:
        return flop_model.fused_scratch_values(self.space.order, self.basis.num_points)

    def _element_fields(self, x: np.ndarray, elements: np.ndarray) -> np.ndarray:
        n1 = self.basis.num_nodes
        return self.space.gather_elements(x, elements).reshape(len(elements), VDIM, n1, n1, n1)

    def _geometry(self, elements: np.ndarray):
        J = jacobian_from_nodes(self._element_fields(self.coordinates, elements), self.basis)
        invJ, detJ = invert_3x3(J)
        check_positive(detJ)
        return invJ, self.weights[None, :] * detJ

    def _material_block(self, elements: np.ndarray):
        """Material data shaped (e, q, q, q, ...) or left constant."""
        q = self.basis.num_points
        mat = self.material
        shape = (len(elements), q, q, q)
        if mat.is_isotropic:
            if mat.scope == 'constant':
                return mat.lam, mat.mu
            lam, mu = mat.lame(elements, self.num_points)
            return lam.reshape(shape), mu.reshape(shape)
        if mat.scope == 'constant':
            return mat.C
        return mat.stiffness_voigt(elements, self.num_points).reshape(shape + (6, 6))

    def _voigt_stress(self, strain: np.ndarray, block, qz: Optional[int] = None) -> np.ndarray:
        constant = self.material.scope == 'constant'
        if self.material.is_isotropic:
            lam, mu = block
            if not constant and qz is not None:
                lam, mu = lam[:, qz], mu[:, qz]
            return isotropic_voigt_stress(strain, lam, mu)
        C = block if constant or qz is None else block[:, qz]
        return dense_voigt_stress(strain, C)

    # two-kernel stages

    def _kernel1(self, elements: np.ndarray, x: np.ndarray):
        e = len(elements)
        u = self._element_fields(x, elements)
        g = np.moveaxis(grad_batch(u, self.basis), 1, -2).reshape(e, self.num_points, 3, 3)
        invJ, wdetJ = self._geometry(elements)
        grad = g @ invJ
        invJT = np.swapaxes(invJ, -1, -2)
        if self.stage == 'sumfac':
            sigma = self._full_stress(grad, elements)
            self.qvec[elements] = wdetJ[:, :, None, None] * (sigma @ invJT)
        else:
            s6 = self._point_voigt_stress(strain_from_grad(grad), elements) * wdetJ[:, :, None]
            self.qvec[elements] = voigt_to_matrix(s6) @ invJT

    def _kernel2(self, elements: np.ndarray, y: np.ndarray):
        e = len(elements)
        q = self.basis.num_points
        v = np.moveaxis(self.qvec[elements].reshape(e, q, q, q, 3, 3), -2, 1)
        local = grad_transpose_batch(v, self.basis)
        self._scatter(local.reshape(e, VDIM, -1), elements, y)

    # fused stage

    def _fused(self, elements: np.ndarray, x: np.ndarray, y: np.ndarray):
        B, D = self.basis.B, self.basis.D
        q = self.basis.num_points
        n1 = self.basis.num_nodes
        e = len(elements)
        u = self._element_fields(x, elements)
        X = self._element_fields(self.coordinates, elements)
        block = self._material_block(elements)
        w = self.weights.reshape(q, q, q)
        out = np.zeros((e, VDIM, n1, n1, n1))
        for qz in range(q):
            g = np.moveaxis(grad_slice(u, B, D, qz), 1, -2)          # (e, q, q, c, m)
            J = np.moveaxis(grad_slice(X, B, D, qz), 1, -2)
            invJ, detJ = invert_3x3(J)
            check_positive(detJ)
            el_qvec = self._voigt_stress(strain_from_grad(g @ invJ), block, qz)
            el_qvec *= (w[qz] * detJ)[..., None]
            # sigma J^-T: row c pairs with the reference derivative m of the test function
            qv = voigt_to_matrix(el_qvec) @ np.swapaxes(invJ, -1, -2)
            grad_transpose_slice(np.moveaxis(qv, -2, 1), B, D, qz, out)
        self._scatter(out.reshape(e, VDIM, -1), elements, y)

    def _apply(self, x: np.ndarray, y: np.ndarray):
        if self.stage == 'fused':
            for chunks in self._color_chunks:
                self._run([partial(self._fused, els, x, y) for els in chunks])
            return
        with self._apply_lock:
            self._run([partial(self._kernel1, els, x) for els in self._chunks])
            for chunks in self._color_chunks:
                self._run([partial(self._kernel2, els, y) for els in chunks])


class ConstrainedOperator(OperatorBase):
    """Z A Z + (I - Z): constrained DOFs act as identity rows and columns."""

    def __init__(self, op: OperatorBase, bc: BcConstraint):
        super().__init__(op.ndof)
        if bc.vector_ndof != op.ndof:
            raise InvalidArgumentError(f"Constraint for {bc.vector_ndof} DOFs applied to operator of size {op.ndof}")
        self.op = op
        self.bc = bc
        self.mask = bc.free_mask()
        self.variant = op.variant

    def add_mult(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check_vectors(x, y)
        inner = self.op.mult(self.mask * x)
        y += self.mask * inner + (1.0 - self.mask) * x
        return y

    def assemble_diagonal(self) -> np.ndarray:
        return self.mask * self.op.assemble_diagonal() + (1.0 - self.mask)

    def counters(self) -> CounterReport:
        return self.op.counters()

    def reset_counters(self):
        self.op.reset_counters()

    def stored_bytes(self) -> int:
        return self.op.stored_bytes()

    def norm_estimate(self) -> float:
        return float(np.max(self.assemble_diagonal()))

    @property
    def label(self) -> str:
        return self.op.label


def constrained_matrix(matrix: sp.spmatrix, bc: BcConstraint) -> sp.csr_matrix:
    mask = bc.free_mask()
    Z = sp.diags(mask)
    out = (Z @ matrix @ Z + sp.diags(1.0 - mask)).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def with_essential_bc(op: OperatorBase, bc: BcConstraint) -> ConstrainedOperator:
    return ConstrainedOperator(op, bc)


def assemble_diagonal(op) -> np.ndarray:
    return op.assemble_diagonal()


def counters(op) -> CounterReport:
    return op.counters()


def apply_pa_baseline(op: PartialAssemblyOperator, x: np.ndarray, y: Optional[np.ndarray] = None) -> np.ndarray:
    if not isinstance(op, PartialAssemblyOperator):
        raise InvalidArgumentError(f"Expected the baseline PA operator, got {type(op).__name__}")
    return op.add_mult(np.asarray(x, dtype=float), np.zeros(op.ndof) if y is None else y)


def apply_paop(op: SumFactorizedOperator, x: np.ndarray, y: Optional[np.ndarray] = None) -> np.ndarray:
    if not isinstance(op, SumFactorizedOperator) or op.stage != 'fused':
        raise InvalidArgumentError(f"Expected the fused PAop operator, got {type(op).__name__}")
    return op.add_mult(np.asarray(x, dtype=float), np.zeros(op.ndof) if y is None else y)


def resolve_kernel(assembly: str, kernel: Optional[str] = None) -> Optional[str]:
    if assembly not in ASSEMBLY_VARIANTS:
        raise InvalidArgumentError(f"Unknown assembly '{assembly}', expected one of {ASSEMBLY_VARIANTS}")
    if assembly == 'fa':
        if kernel is not None:
            raise InvalidArgumentError("Kernel stages apply to partial assembly only")
        return None
    return kernel or DEFAULT_KERNEL[assembly]


def build_operator(space: FESpace, material: VoigtMaterial, assembly: str = 'paop',
                   kernel: Optional[str] = None, basis: Optional[Basis1D] = None,
                   threads: int = 1, chunk_size: Optional[int] = None,
                   memory_cap_bytes: Optional[int] = None) -> ElasticOperator:
    """Operator factory: 'fa', 'pa' (baseline kernels) or 'paop' (fused kernels)."""
    stage = resolve_kernel(assembly, kernel)
    basis = basis or default_basis(space.order)
    if assembly == 'fa':
        return assemble_fa(space, material, basis.rule, memory_cap_bytes, threads, chunk_size)
    if stage == 'baseline':
        return PartialAssemblyOperator(space, material, basis, threads, chunk_size)
    if stage not in flop_model.KERNEL_STAGES:
        raise InvalidArgumentError(f"Unknown kernel stage '{stage}'")
    return SumFactorizedOperator(space, material, basis, stage, threads, chunk_size)

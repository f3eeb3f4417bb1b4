import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from src.models.basis import Basis1D, default_basis
from src.models.material import VoigtMaterial
from src.models.mesh import CartesianMesh, build_cartesian_mesh, build_hierarchy
from src.models.space import VDIM, BcConstraint, BcSpec, FESpace, build_space, constraint_for
from src.utils.errors import InvalidArgumentError
from src.utils.geometry import compute_geometry_factors
from src.utils.krylov import IdentityPreconditioner, JacobiPreconditioner, SolveReport, cg_solve
from src.utils.multigrid import GmgPreconditioner, build_gmg
from src.utils.operators import ConstrainedOperator, ElasticOperator, build_operator
from src.utils.sum_factorization import interp_batch, interp_transpose_batch

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple]
PRECONDITIONERS = ('gmg', 'jacobi', 'none')


def constant_field(value) -> VectorField:
    value = tuple(float(v) for v in value)
    return lambda x, y, z: tuple(np.full_like(x, v) for v in value)


@dataclass
class ElasticityProblem:
    """Box domain, material, body force and Dirichlet data on selected faces."""

    extents: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    material: VoigtMaterial = field(default_factory=VoigtMaterial)
    bc: BcSpec = field(default_factory=lambda: BcSpec.clamped('x-min'))
    body_force: VectorField = field(default_factory=lambda: constant_field((0.0, 0.0, -1.0)))
    dirichlet: Optional[VectorField] = None


def default_benchmark(lam: float = 1.0, mu: float = 1.0) -> ElasticityProblem:
    """Unit cube clamped on x-min under gravity-like load (0, 0, -1)."""
    return ElasticityProblem(material=VoigtMaterial(lam=lam, mu=mu))


def coordinate_field(space: FESpace) -> np.ndarray:
    """Node coordinates laid out as a component-blocked vector field."""
    return np.ascontiguousarray(space.node_coordinates().T).ravel()


def quadrature_points(space: FESpace, basis: Basis1D, elements: np.ndarray,
                      coords: Optional[np.ndarray] = None) -> np.ndarray:
    """(3, e, Q) physical coordinates of the quadrature points of the given elements."""
    n1 = basis.num_nodes
    coords = coordinate_field(space) if coords is None else coords
    X = space.gather_elements(coords, elements).reshape(len(elements), VDIM, n1, n1, n1)
    return np.moveaxis(interp_batch(X, basis).reshape(len(elements), VDIM, -1), 1, 0)


def assemble_load(space: FESpace, body_force: VectorField, basis: Optional[Basis1D] = None,
                  chunk: int = 256) -> np.ndarray:
    """F_i = sum over elements and points of w det(J) f . phi_i."""
    basis = basis or default_basis(space.order)
    geometry = compute_geometry_factors(space, basis.rule)
    q = basis.num_points
    coords = coordinate_field(space)
    F = np.zeros(space.vector_ndof)
    for start in range(0, space.num_elements, chunk):
        elements = np.arange(start, min(start + chunk, space.num_elements))
        x, y, z = quadrature_points(space, basis, elements, coords)
        values = body_force(x, y, z)
        f = np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in values], axis=1)
        f = f * geometry.wdetJ[elements][:, None, :]
        local = interp_transpose_batch(f.reshape(len(elements), VDIM, q, q, q), basis)
        space.scatter_add_elements(local.reshape(len(elements), VDIM, -1), F, elements)
    return F


def eliminate_rhs(op, bc: BcConstraint, load: np.ndarray, dirichlet_values: Optional[np.ndarray] = None) -> np.ndarray:
    """b = Z (F - A g) + (I - Z) g for Dirichlet values g on the constrained DOFs."""
    mask = bc.free_mask()
    if dirichlet_values is None:
        return mask * load
    g = (1.0 - mask) * dirichlet_values
    return mask * (load - op.mult(g)) + g


def build_preconditioner(kind: str, op: ConstrainedOperator, base_mesh: CartesianMesh, levels: int,
                         p: int, problem: ElasticityProblem, chebyshev_order: int = 3,
                         smoothing_steps: int = 1, assembly: str = 'paop', kernel: Optional[str] = None,
                         threads: int = 1, seed: int = 0):
    if kind == 'none':
        return IdentityPreconditioner()
    if kind == 'jacobi':
        return JacobiPreconditioner(op)
    if kind == 'gmg':
        if levels < 2:
            raise InvalidArgumentError("GMG needs at least two mesh levels (--refine >= 1)")
        return build_gmg(base_mesh, levels, p, problem.material, problem.bc, chebyshev_order,
                         smoothing_steps, assembly, kernel, threads, seed,
                         fine_operator=op.op)
    raise InvalidArgumentError(f"Unknown preconditioner '{kind}', expected one of {PRECONDITIONERS}")


@dataclass
class SolveResult:
    space: FESpace
    operator: ElasticOperator
    solution: np.ndarray
    report: SolveReport
    timings: Dict[str, float]
    preconditioner: object


class TimedOperator:
    """Wraps a constrained operator so only its applications are timed."""

    def __init__(self, op: ConstrainedOperator):
        self.op = op
        self.seconds = 0.0
        self.calls = 0

    def mult(self, x: np.ndarray) -> np.ndarray:
        start = time.perf_counter()
        y = self.op.mult(x)
        self.seconds += time.perf_counter() - start
        self.calls += 1
        return y


def solve_problem(problem: ElasticityProblem, p: int, base_cells, levels: int = 2,
                  assembly: str = 'paop', kernel: Optional[str] = None, preconditioner: str = 'gmg',
                  rel_tol: float = 1e-8, max_iters: int = 500, chebyshev_order: int = 3,
                  smoothing_steps: int = 1, threads: int = 1, seed: int = 0,
                  memory_cap_bytes: Optional[int] = None) -> SolveResult:
    """Build the finest-level operator and preconditioner, then run PCG."""
    timings = {}
    start = time.perf_counter()
    base = build_cartesian_mesh(problem.extents, base_cells)
    mesh = build_hierarchy(base, levels)[-1]
    space = build_space(mesh, p)
    basis = default_basis(p)
    op = build_operator(space, problem.material, assembly, kernel, basis=basis, threads=threads,
                        memory_cap_bytes=memory_cap_bytes)
    bc = constraint_for(space, problem.bc)
    constrained = ConstrainedOperator(op, bc)
    load = assemble_load(space, problem.body_force, basis)
    g = space.interpolate(problem.dirichlet) if problem.dirichlet is not None else None
    b = eliminate_rhs(op, bc, load, g)
    precond = build_preconditioner(preconditioner, constrained, base, levels, p, problem, chebyshev_order,
                                   smoothing_steps, assembly, kernel, threads, seed)
    op.reset_counters()
    timings['setup_s'] = time.perf_counter() - start

    timed = TimedOperator(constrained)
    start = time.perf_counter()
    x, report = cg_solve(timed, precond, b, rel_tol=rel_tol, max_iters=max_iters)
    timings['solve_s'] = time.perf_counter() - start
    timings['apply_s'] = timed.seconds
    timings['total_s'] = timings['setup_s'] + timings['solve_s']
    logger.info(f"{op.label} p={p} ndof={space.vector_ndof}: {report.iterations} iterations, "
                f"relative residual {report.final_relative_residual:.2e}")
    return SolveResult(space, op, x, report, timings, precond)

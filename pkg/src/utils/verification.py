import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import sympy

from src.models.basis import Basis1D, default_basis
from src.models.material import VOIGT_INDEX, VoigtMaterial, isotropic_stiffness
from src.models.mesh import build_cartesian_mesh
from src.models.records import ConvergenceRow
from src.models.space import VDIM, BcSpec, FESpace, constraint_for
from src.utils.errors import InvalidArgumentError, SolverError, StudyError
from src.utils.geometry import compute_geometry_factors
from src.utils.operators import ConstrainedOperator, build_operator
from src.utils.problem import ElasticityProblem, assemble_load, coordinate_field, quadrature_points, solve_problem
from src.utils.sum_factorization import interp_batch

logger = logging.getLogger(__name__)

X, Y, Z = sympy.symbols('x y z')
VectorField = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple]


@dataclass
class ManufacturedCase:
    """Exact displacement, matching body force f = -div sigma(u) and material."""

    name: str
    displacement: VectorField
    body_force: VectorField
    material: VoigtMaterial
    bc: BcSpec = BcSpec.all_faces()
    extents: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def to_problem(self) -> ElasticityProblem:
        return ElasticityProblem(
            extents=self.extents,
            material=self.material,
            bc=self.bc,
            body_force=self.body_force,
            dirichlet=self.displacement,
        )


def _broadcast(values, shape) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values])


def sine_case(lam: float = 1.0, mu: float = 1.0, amplitude: float = 0.1) -> ManufacturedCase:
    """u = amplitude * sin(pi x) sin(pi y) sin(pi z) * (1, 1, 1); zero on the unit cube boundary."""
    pi2 = np.pi ** 2

    def displacement(x, y, z):
        s = amplitude * np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)
        return s, s, s

    def body_force(x, y, z):
        sx, sy, sz = np.sin(np.pi * x), np.sin(np.pi * y), np.sin(np.pi * z)
        cx, cy, cz = np.cos(np.pi * x), np.cos(np.pi * y), np.cos(np.pi * z)
        s = sx * sy * sz
        a = amplitude * pi2
        fx = a * ((lam + mu) * (s - cx * cy * sz - cx * sy * cz) + 3 * mu * s)
        fy = a * ((lam + mu) * (s - cx * cy * sz - sx * cy * cz) + 3 * mu * s)
        fz = a * ((lam + mu) * (s - cx * sy * cz - sx * cy * cz) + 3 * mu * s)
        return fx, fy, fz

    return ManufacturedCase('sine', displacement, body_force, VoigtMaterial(lam=lam, mu=mu))


def symbolic_body_force(exprs: Sequence, C6: np.ndarray) -> List[sympy.Expr]:
    """-div(C : eps(u)) for a displacement given as three sympy expressions."""
    u = [sympy.sympify(e) for e in exprs]
    coords = (X, Y, Z)
    grad = sympy.Matrix(3, 3, lambda i, j: sympy.diff(u[i], coords[j]))
    strain = sympy.Matrix([
        grad[0, 0], grad[1, 1], grad[2, 2],
        grad[1, 2] + grad[2, 1], grad[0, 2] + grad[2, 0], grad[0, 1] + grad[1, 0],
    ])
    stress = sympy.Matrix(np.asarray(C6, dtype=float).tolist()) * strain
    return [
        sympy.simplify(-sum(sympy.diff(stress[int(VOIGT_INDEX[i, j])], coords[j]) for j in range(3)))
        for i in range(3)
    ]


def from_expressions(exprs: Sequence, lam: float = 1.0, mu: float = 1.0, C: Optional[np.ndarray] = None,
                     name: Optional[str] = None, bc: Optional[BcSpec] = None) -> ManufacturedCase:
    """Manufactured case for any closed-form displacement, isotropic or anisotropic material."""
    material = VoigtMaterial(C=C) if C is not None else VoigtMaterial(lam=lam, mu=mu)
    C6 = np.asarray(C, dtype=float) if C is not None else isotropic_stiffness(lam, mu)
    u = [sympy.sympify(e) for e in exprs]
    f = symbolic_body_force(u, C6)
    u_fn = sympy.lambdify((X, Y, Z), u, 'numpy')
    f_fn = sympy.lambdify((X, Y, Z), f, 'numpy')
    return ManufacturedCase(
        name=name or ', '.join(str(e) for e in u),
        displacement=lambda x, y, z: tuple(u_fn(x, y, z)),
        body_force=lambda x, y, z: tuple(f_fn(x, y, z)),
        material=material,
        bc=bc or BcSpec.all_faces(),
    )


def manufactured_rhs(case: ManufacturedCase, space: FESpace, basis: Optional[Basis1D] = None) -> np.ndarray:
    """Load vector of the case's body force; Dirichlet data is imposed at solve time."""
    return assemble_load(space, case.body_force, basis)


def l2_error(space: FESpace, x: np.ndarray, exact: VectorField, basis: Optional[Basis1D] = None,
             chunk: int = 256) -> float:
    """L2 norm of u_h - u_exact with q = p + 2 points per direction."""
    p = space.order
    basis = basis or default_basis(p, p + 2)
    geometry = compute_geometry_factors(space, basis.rule)
    coords = coordinate_field(space)
    n1 = p + 1
    total = 0.0
    for start in range(0, space.num_elements, chunk):
        elements = np.arange(start, min(start + chunk, space.num_elements))
        e = len(elements)
        local = space.gather_elements(x, elements).reshape(e, VDIM, n1, n1, n1)
        uh = interp_batch(local, basis).reshape(e, VDIM, -1)
        xq, yq, zq = quadrature_points(space, basis, elements, coords)
        ue = np.moveaxis(_broadcast(exact(xq, yq, zq), xq.shape), 0, 1)
        total += float(np.sum(geometry.wdetJ[elements][:, None, :] * (uh - ue) ** 2))
    return float(np.sqrt(total))


def field_scale(space: FESpace, exact: VectorField) -> float:
    values = space.interpolate(exact)
    return max(float(np.max(np.abs(values))), 1.0e-300)


def patch_test(space: FESpace, material: VoigtMaterial, bc: Optional[BcSpec] = None,
               exprs: Sequence = ('x', '0', '0'), rel_tol: float = 1e-12,
               threshold: float = 1e-9) -> Tuple[bool, float]:
    """Solve for an exactly representable displacement; pass iff the L2 error is at round-off level.

    The body force is derived symbolically, so the material must be constant.
    """
    if material.scope != 'constant':
        raise InvalidArgumentError(f"Patch tests need a constant material, got {material.scope}-wise data")
    if material.is_isotropic:
        case = from_expressions(exprs, lam=float(material.lam), mu=float(material.mu), bc=bc)
    else:
        case = from_expressions(exprs, C=material.C, bc=bc)
    case = replace(case, extents=tuple(space.mesh.extents))
    result = solve_problem(
        case.to_problem(), space.order, space.mesh.cells, levels=1,
        preconditioner='jacobi', rel_tol=rel_tol, max_iters=20 * space.vector_ndof,
    )
    error = l2_error(result.space, result.solution, case.displacement)
    passed = error <= threshold * field_scale(result.space, case.displacement)
    logger.info(f"Patch test {case.name} p={space.order}: error {error:.3e} ({'pass' if passed else 'fail'})")
    return passed, error


def default_base_cells(p: int) -> Tuple[int, int, int]:
    return (2, 2, 2) if p == 1 else (1, 1, 1)


def convergence_study(case: ManufacturedCase, p: int, max_levels: int = 4,
                      base_cells: Optional[Sequence[int]] = None, assembly: str = 'paop',
                      rel_tol: float = 1e-12, threads: int = 1) -> List[ConvergenceRow]:
    """L2 errors and observed rates over successive uniform refinements."""
    base = build_cartesian_mesh(case.extents, base_cells or default_base_cells(p))
    rows: List[ConvergenceRow] = []
    for level in range(max_levels):
        levels = level + 1
        try:
            result = solve_problem(
                case.to_problem(), p, base.cells, levels=levels, assembly=assembly,
                preconditioner='gmg' if levels >= 2 else 'jacobi',
                rel_tol=rel_tol, max_iters=5000, threads=threads,
            )
        except SolverError as e:
            raise StudyError(str(e), level)
        if not result.report.converged:
            raise StudyError(f"CG stopped at relative residual {result.report.final_relative_residual:.2e}", level)
        error = l2_error(result.space, result.solution, case.displacement)
        rate = None
        if rows:
            rate = float(np.log2(rows[-1].l2_error / error))
        rows.append(ConvergenceRow(
            level=level,
            h=result.space.mesh.h_max,
            scalar_ndof=result.space.scalar_ndof,
            l2_error=error,
            rate=rate,
        ))
        logger.info(f"Level {level}: h={rows[-1].h:.4f}, error={error:.3e}, rate={rate if rate is None else round(rate, 3)}")
    return rows


def convergence_table(rows: List[ConvergenceRow]) -> pd.DataFrame:
    return pd.DataFrame([vars(row) for row in rows], columns=['level', 'h', 'scalar_ndof', 'l2_error', 'rate'])


def format_convergence(rows: List[ConvergenceRow]) -> str:
    df = convergence_table(rows)
    return df.to_string(index=False, formatters={
        'h': '{:.5f}'.format,
        'l2_error': '{:.4e}'.format,
        'rate': lambda r: '-' if pd.isna(r) else f'{r:.3f}',
    })


# displacements of degree <= p per direction, exactly representable at order p
PATCH_FIELDS = {
    1: [('x', '0', '0'), ('y', 'z', 'x'), ('x + 2*y', 'x*y', 'y*z*x')],
    2: [('x*y', 'y*z', '0'), ('x**2', 'y**2 - x', 'z**2 + x*y')],
    3: [('x**3', 'x*y*z', 'y**2'), ('x**2*y**3', 'z**3 - x', '0')],
    4: [('x**4 - y', 'y**3*z', 'z**2'), ('x**4*y**4', '0', 'x*y**2*z**3')],
}


def patch_fields(p: int) -> List[Tuple[str, str, str]]:
    return [fields for order, group in PATCH_FIELDS.items() if order <= p for fields in group]


def operator_equivalence(space: FESpace, material: VoigtMaterial, samples: int = 20, seed: int = 0,
                         bc: Optional[BcSpec] = None) -> float:
    """Largest relative difference between the FA, PA and PAop actions over random vectors."""
    operators = [build_operator(space, material, assembly) for assembly in ('fa', 'pa', 'paop')]
    if bc is not None:
        constraint = constraint_for(space, bc)
        operators = [ConstrainedOperator(op, constraint) for op in operators]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = rng.standard_normal(space.vector_ndof)
        results = [op.mult(x) for op in operators]
        scale = max(float(np.linalg.norm(results[0])), 1.0e-300)
        for other in results[1:]:
            worst = max(worst, float(np.linalg.norm(other - results[0])) / scale)
    return worst

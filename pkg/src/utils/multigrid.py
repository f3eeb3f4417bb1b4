import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from config.settings import load_settings
from src.models.basis import default_basis
from src.models.material import VoigtMaterial
from src.models.mesh import CartesianMesh, build_hierarchy
from src.models.space import BcConstraint, BcSpec, FESpace, Prolongation, build_prolongation, build_space, constraint_for
from src.utils.chebyshev import ChebyshevSmoother
from src.utils.errors import InvalidArgumentError, SolverError
from src.utils.krylov import JacobiPreconditioner, cg_solve
from src.utils.operators import (
    ConstrainedOperator,
    ElasticOperator,
    assemble_fa,
    build_operator,
    constrained_matrix,
)

logger = logging.getLogger(__name__)

COARSE_TOLERANCE = 1e-10

MaterialSource = Union[VoigtMaterial, Callable[[CartesianMesh], VoigtMaterial]]


class CoarseSolver:
    """Dense Cholesky up to a size cap, Jacobi-preconditioned CG beyond it."""

    def __init__(self, matrix: sp.spmatrix, level: int = 0, direct_max_ndof: Optional[int] = None):
        self.matrix = sp.csr_matrix(matrix)
        self.level = level
        cap = direct_max_ndof if direct_max_ndof is not None else load_settings().coarse_direct_max_ndof
        self.ndof = self.matrix.shape[0]
        self.path = 'direct' if self.ndof <= cap else 'pcg'
        self._factor = None
        self._jacobi = None
        if self.path == 'direct':
            try:
                self._factor = la.cho_factor(self.matrix.toarray(), lower=True, check_finite=True)
            except la.LinAlgError as e:
                raise SolverError(f"coarse matrix is not positive definite ({e})", level)
        else:
            self._jacobi = JacobiPreconditioner(None, self.matrix.diagonal())

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.path == 'direct':
            return la.cho_solve(self._factor, b)
        x, report = cg_solve(self.matrix, self._jacobi, b, rel_tol=COARSE_TOLERANCE,
                             max_iters=10 * self.ndof, level=self.level)
        if not report.converged:
            raise SolverError(f"coarse CG did not reach {COARSE_TOLERANCE:g}", self.level)
        return x


def coarse_solve(matrix: sp.spmatrix, b: np.ndarray, level: int = 0,
                 direct_max_ndof: Optional[int] = None) -> np.ndarray:
    return CoarseSolver(matrix, level, direct_max_ndof).solve(np.asarray(b, dtype=float))


@dataclass
class GmgLevel:
    index: int
    space: FESpace
    bc: BcConstraint
    operator: ConstrainedOperator
    smoother: Optional[ChebyshevSmoother] = None
    prolongation: Optional[Prolongation] = None     # from the next coarser level

    @property
    def ndof(self) -> int:
        return self.space.vector_ndof


class GmgPreconditioner:
    """Symmetric V-cycle, coarsest level first in `levels`."""

    name = 'gmg'

    def __init__(self, levels: List[GmgLevel], coarse: CoarseSolver, smoothing_steps: int = 1):
        if len(levels) < 2:
            raise InvalidArgumentError("GMG needs at least two levels")
        self.levels = levels
        self.coarse = coarse
        self.smoothing_steps = smoothing_steps

    @property
    def finest(self) -> GmgLevel:
        return self.levels[-1]

    def apply(self, b: np.ndarray) -> np.ndarray:
        return gmg_vcycle(self, b)

    def _cycle(self, index: int, b: np.ndarray) -> np.ndarray:
        if index == 0:
            return self.coarse.solve(b)
        level = self.levels[index]
        coarser = self.levels[index - 1]
        mask = level.bc.free_mask()
        x = np.zeros_like(b)
        for _ in range(self.smoothing_steps):
            level.smoother.smooth(b, x)
        r = mask * (b - level.operator.mult(x))
        rc = coarser.bc.free_mask() * level.prolongation.restrict(r)
        ec = self._cycle(index - 1, rc)
        x += mask * level.prolongation.prolong(ec)
        for _ in range(self.smoothing_steps):
            level.smoother.smooth(b, x)
        return x

    def report(self) -> List[Dict]:
        rows = []
        for level in self.levels:
            row = {'level': level.index, 'ndof': level.ndof, 'variant': level.operator.label}
            if level.smoother is not None:
                row['lambda_max'] = level.smoother.lambda_max
            else:
                row['coarse_path'] = self.coarse.path
            rows.append(row)
        return rows


def gmg_vcycle(precond: GmgPreconditioner, b: np.ndarray) -> np.ndarray:
    """z = Z V(Z b) + (I - Z) b for the finest-level constraint Z."""
    b = np.asarray(b, dtype=float)
    mask = precond.finest.bc.free_mask()
    z = precond._cycle(len(precond.levels) - 1, mask * b)
    return mask * z + (1.0 - mask) * b


def _material_on(material: MaterialSource, mesh: CartesianMesh) -> VoigtMaterial:
    if callable(material) and not isinstance(material, VoigtMaterial):
        return material(mesh)
    if material.scope != 'constant':
        raise InvalidArgumentError("Spatially varying materials need a per-mesh material factory for GMG")
    return material


def build_gmg(base_mesh: CartesianMesh, levels: int, p: int, material: MaterialSource,
              bc_spec: BcSpec, chebyshev_order: int = 3, smoothing_steps: int = 1,
              assembly: str = 'paop', kernel: Optional[str] = None, threads: int = 1,
              seed: int = 0, power_iterations: int = 10,
              direct_max_ndof: Optional[int] = None,
              fine_operator: Optional[ElasticOperator] = None) -> GmgPreconditioner:
    """Geometric hierarchy on `levels` nested meshes with an assembled coarsest level."""
    if levels < 2:
        raise InvalidArgumentError(f"GMG needs levels >= 2, got {levels}")
    meshes = build_hierarchy(base_mesh, levels)
    spaces = [build_space(mesh, p) for mesh in meshes]
    basis = default_basis(p)

    coarse_space = spaces[0]
    coarse_bc = constraint_for(coarse_space, bc_spec)
    coarse_fa = assemble_fa(coarse_space, _material_on(material, meshes[0]), basis.rule, threads=threads)
    coarse = CoarseSolver(constrained_matrix(coarse_fa.matrix, coarse_bc), level=0,
                          direct_max_ndof=direct_max_ndof)
    hierarchy = [GmgLevel(0, coarse_space, coarse_bc, ConstrainedOperator(coarse_fa, coarse_bc))]
    logger.info(f"GMG level 0: {coarse_space.vector_ndof} DOFs, coarse path {coarse.path}")

    for index in range(1, levels):
        space = spaces[index]
        bc = constraint_for(space, bc_spec)
        if index == levels - 1 and fine_operator is not None:
            op = fine_operator
        else:
            op = build_operator(space, _material_on(material, meshes[index]), assembly, kernel,
                                basis=basis, threads=threads)
        constrained = ConstrainedOperator(op, bc)
        smoother = ChebyshevSmoother.from_operator(constrained, chebyshev_order, power_iterations, seed)
        op.reset_counters()
        hierarchy.append(GmgLevel(
            index=index,
            space=space,
            bc=bc,
            operator=constrained,
            smoother=smoother,
            prolongation=build_prolongation(spaces[index - 1], space),
        ))
        logger.info(f"GMG level {index}: {space.vector_ndof} DOFs, {op.label}, {smoother.describe()}")

    return GmgPreconditioner(hierarchy, coarse, smoothing_steps)

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.utils.errors import EstimationError, InvalidArgumentError, SolverError

logger = logging.getLogger(__name__)

SAFETY_FACTOR = 1.1


@dataclass
class SolveReport:
    iterations: int
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    final_relative_residual: float = 0.0

    def convergence_factor(self) -> float:
        """Geometric mean of successive residual ratios."""
        if self.iterations == 0 or len(self.residual_history) < 2:
            return 0.0
        first, last = self.residual_history[0], self.residual_history[-1]
        if last <= 0:
            return 0.0
        return float((last / first) ** (1.0 / (len(self.residual_history) - 1)))


def as_apply(op) -> Callable[[np.ndarray], np.ndarray]:
    """Operator objects, matrices and callables all become x -> A x."""
    if hasattr(op, 'mult'):
        return op.mult
    if callable(op):
        return op
    return lambda x: op @ x


def as_preconditioner(precond) -> Callable[[np.ndarray], np.ndarray]:
    if precond is None:
        return lambda r: r.copy()
    if hasattr(precond, 'apply'):
        return precond.apply
    return as_apply(precond)


class IdentityPreconditioner:
    name = 'none'

    def apply(self, r: np.ndarray) -> np.ndarray:
        return r.copy()


class JacobiPreconditioner:
    """Inverse of the assembled diagonal (identity on constrained DOFs)."""

    name = 'jacobi'

    def __init__(self, op, diagonal: Optional[np.ndarray] = None):
        diag = op.assemble_diagonal() if diagonal is None else np.asarray(diagonal, dtype=float)
        if np.any(diag <= 0):
            raise SolverError("Jacobi preconditioner needs a positive diagonal")
        self.inv_diag = 1.0 / diag

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self.inv_diag * r


def jacobi_preconditioner(op) -> JacobiPreconditioner:
    return JacobiPreconditioner(op)


def power_iteration_lambda_max(op, inv_diag: np.ndarray, iters: int = 10, seed: int = 0) -> float:
    """Largest eigenvalue of D^-1 A times the safety factor."""
    if iters < 1:
        raise InvalidArgumentError(f"iters must be >= 1, got {iters}")
    apply = as_apply(op)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(len(inv_diag))
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        y = inv_diag * apply(x)
        norm = np.linalg.norm(y)
        if norm == 0.0 or not np.isfinite(norm):
            raise EstimationError("Power iteration hit a zero or non-finite operator image")
        estimate = norm
        x = y / norm
    return SAFETY_FACTOR * float(estimate)


def cg_solve(op, precond, b: np.ndarray, rel_tol: float = 1e-8, max_iters: int = 1000,
             level: Optional[int] = None) -> Tuple[np.ndarray, SolveReport]:
    """Preconditioned CG from a zero initial guess.

    Stops when sqrt(r.z) falls below rel_tol times its initial value.
    """
    apply = as_apply(op)
    precondition = as_preconditioner(precond)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    if not np.any(b):
        return x, SolveReport(iterations=0, residual_history=[], converged=True, final_relative_residual=0.0)

    r = b.copy()
    z = precondition(r)
    rz = float(r @ z)
    if rz <= 0:
        raise SolverError("Preconditioner is not positive definite", level)
    initial = np.sqrt(rz)
    history = [1.0]
    d = z.copy()
    report = SolveReport(iterations=0, residual_history=history)

    for iteration in range(1, max_iters + 1):
        Ad = apply(d)
        dAd = float(d @ Ad)
        if dAd <= 0:
            raise SolverError(f"Operator is not positive definite (d.Ad = {dAd:.3e} at iteration {iteration})", level)
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = precondition(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise SolverError(f"Preconditioner is not positive definite at iteration {iteration}", level)
        relative = np.sqrt(rz_new) / initial
        history.append(float(relative))
        report.iterations = iteration
        logger.debug(f"CG iteration {iteration}: relative residual {relative:.3e}")
        if relative <= rel_tol:
            report.converged = True
            break
        d = z + (rz_new / rz) * d
        rz = rz_new

    report.final_relative_residual = history[-1]
    if not report.converged:
        logger.warning(f"CG stopped after {report.iterations} iterations at relative residual {history[-1]:.3e}")
    return x, report

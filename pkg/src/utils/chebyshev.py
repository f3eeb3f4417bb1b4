import logging
from typing import Optional

import numpy as np

from src.utils.errors import InvalidArgumentError
from src.utils.krylov import as_apply, power_iteration_lambda_max

logger = logging.getLogger(__name__)


class ChebyshevSmoother:
    """Degree-k Chebyshev relaxation of D^-1 A on [alpha, beta] * lambda_max."""

    def __init__(self, op, inv_diag: np.ndarray, lambda_max: float, order: int = 3,
                 alpha: float = 0.1, beta: float = 1.1):
        if lambda_max <= 0:
            raise InvalidArgumentError(f"lambda_max must be positive, got {lambda_max}")
        if not 0 < alpha < beta:
            raise InvalidArgumentError(f"Need 0 < alpha < beta, got alpha={alpha}, beta={beta}")
        if order < 1:
            raise InvalidArgumentError(f"Chebyshev order must be >= 1, got {order}")
        self.op = op
        self._apply = as_apply(op)
        self.inv_diag = np.asarray(inv_diag, dtype=float)
        self.lambda_max = float(lambda_max)
        self.order = int(order)
        self.lower = alpha * self.lambda_max
        self.upper = beta * self.lambda_max

    @classmethod
    def from_operator(cls, op, order: int = 3, power_iterations: int = 10, seed: int = 0,
                      alpha: float = 0.1, beta: float = 1.1) -> 'ChebyshevSmoother':
        inv_diag = 1.0 / op.assemble_diagonal()
        lambda_max = power_iteration_lambda_max(op, inv_diag, power_iterations, seed)
        return cls(op, inv_diag, lambda_max, order, alpha, beta)

    def smooth(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        """x <- x + p_k(D^-1 A) D^-1 (b - A x), in place."""
        theta = 0.5 * (self.upper + self.lower)
        delta = 0.5 * (self.upper - self.lower)
        sigma = theta / delta
        rho = 1.0 / sigma
        r = self.inv_diag * (b - self._apply(x))
        d = r / theta
        for k in range(self.order):
            x += d
            if k == self.order - 1:
                break
            r -= self.inv_diag * self._apply(d)
            rho_next = 1.0 / (2.0 * sigma - rho)
            d = rho_next * rho * d + (2.0 * rho_next / delta) * r
            rho = rho_next
        return x

    def describe(self) -> str:
        return f"Chebyshev k={self.order} on [{self.lower:.4g}, {self.upper:.4g}]"


def chebyshev_smooth(smoother: ChebyshevSmoother, b: np.ndarray, x: Optional[np.ndarray] = None) -> np.ndarray:
    x = np.zeros_like(b, dtype=float) if x is None else x
    return smoother.smooth(b, x)

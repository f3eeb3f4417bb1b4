from typing import Optional


class ElasticityError(Exception):
    """Base class for every error raised by the solver library."""


class InvalidArgumentError(ElasticityError, ValueError):
    pass


class GeometryError(ElasticityError):
    pass


class EstimationError(ElasticityError):
    pass


class SolverError(ElasticityError, RuntimeError):
    def __init__(self, message: str, level: Optional[int] = None):
        if level is not None:
            message = f"level {level}: {message}"
        super().__init__(message)
        self.level = level


class StudyError(ElasticityError):
    def __init__(self, message: str, level: int):
        super().__init__(f"convergence study failed at level {level}: {message}")
        self.level = level


class OperatorMemoryError(ElasticityError, MemoryError):
    """Full Assembly storage estimate exceeds the configured cap."""

    def __init__(self, estimate_bytes: int, cap_bytes: int):
        super().__init__(
            f"Full Assembly needs ~{estimate_bytes / 1024 ** 2:.1f} MiB, "
            f"cap is {cap_bytes / 1024 ** 2:.1f} MiB"
        )
        self.estimate_bytes = estimate_bytes
        self.cap_bytes = cap_bytes

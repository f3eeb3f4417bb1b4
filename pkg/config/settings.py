import os
from dotenv import load_dotenv

from src.utils.errors import InvalidArgumentError

load_dotenv()


class SolverSettings:
    """Process-wide defaults; CLI flags override every value here."""

    def __init__(self):
        self.log_dir = os.getenv('ELASTICITY_LOG_DIR', 'logs')
        self.log_level = os.getenv('ELASTICITY_LOG_LEVEL', 'INFO').upper()
        self.fa_memory_cap_bytes = self._positive_int('ELASTICITY_FA_MEMORY_CAP', 2 * 1024 ** 3)
        self.coarse_direct_max_ndof = self._positive_int('ELASTICITY_COARSE_DIRECT_MAX_NDOF', 6000)
        self.element_chunk = self._positive_int('ELASTICITY_ELEMENT_CHUNK', 64)
        self.default_threads = self._positive_int('ELASTICITY_THREADS', 1)

    @staticmethod
    def _positive_int(name: str, default: int) -> int:
        raw = os.getenv(name)
        if raw is None or raw.strip() == '':
            return default
        try:
            value = int(raw)
        except ValueError:
            raise InvalidArgumentError(f"{name} must be an integer, got {raw!r}")
        if value <= 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value}")
        return value

    def as_dict(self):
        return {
            'log_dir': self.log_dir,
            'log_level': self.log_level,
            'fa_memory_cap_bytes': self.fa_memory_cap_bytes,
            'coarse_direct_max_ndof': self.coarse_direct_max_ndof,
            'element_chunk': self.element_chunk,
            'default_threads': self.default_threads,
        }


def load_settings() -> SolverSettings:
    return SolverSettings()

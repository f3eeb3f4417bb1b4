import logging
import re

import numpy as np

from src.models.material import VoigtMaterial
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

UPPER_TRIANGLE_VALUES = 21


def parse_stiffness(text: str) -> np.ndarray:
    """
    Parse a 6x6 Voigt stiffness from its 21 upper-triangle entries, row by row.

    Values may be separated by whitespace or commas; '#' starts a comment.
    """
    lines = [line.split('#', 1)[0] for line in text.splitlines()]
    tokens = [t for t in re.split(r'[\s,]+', ' '.join(lines)) if t]
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise InvalidArgumentError(f"Malformed stiffness value: {e}")
    if len(values) != UPPER_TRIANGLE_VALUES:
        raise InvalidArgumentError(
            f"Expected {UPPER_TRIANGLE_VALUES} upper-triangle values, got {len(values)}")
    C = np.zeros((6, 6))
    C[np.triu_indices(6)] = values
    return C + np.triu(C, 1).T


def load_material(path: str) -> VoigtMaterial:
    """Constant anisotropic material from a stiffness file."""
    with open(path) as f:
        C = parse_stiffness(f.read())
    material = VoigtMaterial(C=C)
    logger.info(f"Loaded anisotropic stiffness from {path}")
    return material

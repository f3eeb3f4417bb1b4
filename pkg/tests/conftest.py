import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.models.material import VoigtMaterial
from src.models.mesh import build_cartesian_mesh
from src.models.space import build_space


def make_space(p, cells=(1, 1, 1), extents=(1.0, 1.0, 1.0)):
    return build_space(build_cartesian_mesh(extents, cells), p)


def random_spd_stiffness(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6))
    return scale * (A @ A.T + 6.0 * np.eye(6))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_material():
    return VoigtMaterial(lam=1.0, mu=1.0)


@pytest.fixture
def aniso_material():
    return VoigtMaterial(C=random_spd_stiffness(7))


@pytest.fixture
def small_space():
    return make_space(2, (2, 2, 2))


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Keep tests independent of a developer's .env."""
    for name in list(os.environ):
        if name.startswith('ELASTICITY_'):
            monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv('ELASTICITY_LOG_DIR', str(tmp_path / 'logs'))

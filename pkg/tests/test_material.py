import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from src.models.material import (
    VoigtMaterial,
    dense_voigt_stress,
    isotropic_stiffness,
    isotropic_voigt_stress,
    strain_from_grad,
    stress_full_tensor,
    voigt_stress,
    voigt_to_matrix,
    voigt_to_tensor,
)
from src.utils.errors import InvalidArgumentError
from tests.conftest import random_spd_stiffness

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


def test_isotropic_stiffness_entries():
    C = isotropic_stiffness(1.0, 1.0)
    np.testing.assert_allclose(C[:3, :3], [[3, 1, 1], [1, 3, 1], [1, 1, 3]])
    np.testing.assert_allclose(np.diag(C)[3:], 1.0)
    assert np.count_nonzero(C[:3, 3:]) == 0


def test_uniaxial_strain():
    strain = np.array([1.0, 0, 0, 0, 0, 0])
    stress = isotropic_voigt_stress(strain, 2.0, 3.0)
    np.testing.assert_allclose(stress, [8.0, 2.0, 2.0, 0, 0, 0])


def test_pure_shear():
    grad = np.zeros((3, 3))
    grad[0, 1] = grad[1, 0] = 0.5
    strain = strain_from_grad(grad)
    np.testing.assert_allclose(strain, [0, 0, 0, 0, 0, 1.0])
    np.testing.assert_allclose(isotropic_voigt_stress(strain, 5.0, 2.0), [0, 0, 0, 0, 0, 2.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 3), elements=finite),
       st.floats(min_value=0.0, max_value=5.0), st.floats(min_value=0.1, max_value=5.0))
def test_voigt_matches_full_tensor(grad, lam, mu):
    full = stress_full_tensor(grad, lam, mu)
    voigt = isotropic_voigt_stress(strain_from_grad(grad), lam, mu)
    np.testing.assert_allclose(voigt_to_matrix(voigt), full, atol=1e-12 * max(1.0, np.abs(full).max()))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 3), elements=finite), st.integers(min_value=0, max_value=1000))
def test_dense_voigt_matches_tensor_contraction(grad, seed):
    C6 = random_spd_stiffness(seed)
    C4 = voigt_to_tensor(C6)
    full = np.einsum('ijkl,kl->ij', C4, grad)
    voigt = dense_voigt_stress(strain_from_grad(grad), C6)
    np.testing.assert_allclose(voigt_to_matrix(voigt), full, atol=1e-12 * max(1.0, np.abs(full).max()))


def test_tensor_minor_and_major_symmetry():
    C4 = voigt_to_tensor(random_spd_stiffness(3))
    np.testing.assert_array_equal(C4, np.swapaxes(C4, 0, 1))
    np.testing.assert_array_equal(C4, np.swapaxes(C4, 2, 3))
    np.testing.assert_array_equal(C4, C4.transpose(2, 3, 0, 1))


def test_voigt_stress_dispatch_for_constant_materials():
    strain = np.arange(6.0)
    iso = VoigtMaterial(lam=1.0, mu=2.0)
    np.testing.assert_allclose(voigt_stress(strain, iso), isotropic_stiffness(1.0, 2.0) @ strain)
    C = random_spd_stiffness(1)
    np.testing.assert_allclose(voigt_stress(strain, VoigtMaterial(C=C)), C @ strain)


def test_per_element_material_broadcast():
    mat = VoigtMaterial(lam=np.array([1.0, 2.0, 3.0]), mu=np.array([1.0, 1.0, 4.0]))
    assert mat.scope == 'element'
    lam, mu = mat.lame(np.array([2, 0]), 5)
    assert lam.shape == (2, 5)
    np.testing.assert_allclose(lam[:, 0], [3.0, 1.0])
    np.testing.assert_allclose(mu[:, 4], [4.0, 1.0])
    mat.check_layout(3, 8)
    with pytest.raises(InvalidArgumentError):
        mat.check_layout(4, 8)


def test_per_point_material_layout():
    mat = VoigtMaterial(lam=np.ones((2, 8)), mu=np.ones((2, 8)))
    assert mat.scope == 'point'
    with pytest.raises(InvalidArgumentError):
        mat.check_layout(2, 27)


def test_varying_material_needs_context():
    mat = VoigtMaterial(lam=np.ones(2), mu=np.ones(2))
    with pytest.raises(InvalidArgumentError):
        voigt_stress(np.zeros(6), mat)


@pytest.mark.parametrize('kwargs', [
    {'lam': 1.0, 'mu': 0.0},
    {'lam': -1.0, 'mu': 1.0},
    {'lam': np.inf, 'mu': 1.0},
])
def test_invalid_isotropic_parameters(kwargs):
    with pytest.raises(InvalidArgumentError):
        VoigtMaterial(**kwargs)


def test_invalid_anisotropic_stiffness():
    C = random_spd_stiffness(0)
    asym = C.copy()
    asym[0, 1] += 1.0
    with pytest.raises(InvalidArgumentError):
        VoigtMaterial(C=asym)
    with pytest.raises(InvalidArgumentError):
        VoigtMaterial(C=-C)
    with pytest.raises(InvalidArgumentError):
        VoigtMaterial(C=np.eye(5))
    with pytest.raises(InvalidArgumentError):
        VoigtMaterial(lam=1.0, C=C)

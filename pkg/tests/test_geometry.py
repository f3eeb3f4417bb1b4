import numpy as np
import pytest

from src.models.basis import default_basis, gauss_legendre_rule
from src.utils.errors import GeometryError
from src.utils.geometry import check_positive, compute_geometry_factors, invert_3x3, jacobian_from_nodes
from tests.conftest import make_space


def test_box_cell_jacobian_is_diagonal():
    space = make_space(2, (2, 4, 1), (1.0, 2.0, 3.0))
    geo = compute_geometry_factors(space, gauss_legendre_rule(3))
    np.testing.assert_allclose(geo.J[0, 0], np.diag([0.5, 0.5, 3.0]), atol=1e-14)
    np.testing.assert_allclose(geo.detJ, 0.75)
    assert geo.wdetJ.sum() == pytest.approx(6.0)


def test_inverse_of_random_matrices(rng):
    J = rng.standard_normal((10, 3, 3)) + 3 * np.eye(3)
    inv, det = invert_3x3(J)
    np.testing.assert_allclose(inv @ J, np.broadcast_to(np.eye(3), J.shape), atol=1e-12)
    np.testing.assert_allclose(det, np.linalg.det(J), rtol=1e-12)


def test_isoparametric_jacobian_matches_trilinear():
    p = 3
    space = make_space(p, (2, 1, 1), (2.0, 1.0, 1.0))
    basis = default_basis(p)
    coords = np.ascontiguousarray(space.node_coordinates().T).ravel()
    local = space.gather_elements(coords).reshape(space.num_elements, 3, p + 1, p + 1, p + 1)
    J = jacobian_from_nodes(local, basis)
    expected = compute_geometry_factors(space, basis.rule).J
    np.testing.assert_allclose(J, expected, atol=1e-13)


def test_inverted_element_rejected():
    with pytest.raises(GeometryError):
        check_positive(np.array([[1.0, -0.5]]))

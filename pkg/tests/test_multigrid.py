import numpy as np
import pytest
import scipy.sparse as sp

from src.models.material import VoigtMaterial
from src.models.mesh import build_cartesian_mesh
from src.models.space import BcSpec
from src.utils.multigrid import build_gmg, coarse_solve, gmg_vcycle
from src.utils.operators import ConstrainedOperator, assemble_fa
from src.utils.problem import default_benchmark, solve_problem

CLAMPED = BcSpec.clamped('x-min')


def two_level(p=2, cells=(1, 1, 1), material=None):
    base = build_cartesian_mesh((1.0, 1.0, 1.0), cells)
    return build_gmg(base, 2, p, material or VoigtMaterial(), CLAMPED)


def test_zero_rhs_gives_zero():
    gmg = two_level()
    z = gmg_vcycle(gmg, np.zeros(gmg.finest.ndof))
    np.testing.assert_array_equal(z, 0.0)


def test_constrained_unit_vector_passes_through():
    gmg = two_level()
    i = int(gmg.finest.bc.dofs[3])
    e = np.zeros(gmg.finest.ndof)
    e[i] = 1.0
    np.testing.assert_array_equal(gmg_vcycle(gmg, e), e)


def test_preconditioner_is_spd_over_many_vectors():
    gmg = two_level(material=VoigtMaterial(lam=2.0, mu=0.5))
    rng = np.random.default_rng(11)
    for _ in range(50):
        x = rng.standard_normal(gmg.finest.ndof)
        y = rng.standard_normal(gmg.finest.ndof)
        Mx, My = gmg.apply(x), gmg.apply(y)
        assert x @ Mx > 0
        assert abs(y @ Mx - x @ My) <= 1e-10 * np.linalg.norm(Mx) * np.linalg.norm(y)


def test_single_cell_quadratic_coarse_level_is_direct():
    gmg = two_level(p=2)
    rows = gmg.report()
    assert rows[0]['ndof'] == 81
    assert rows[0]['coarse_path'] == 'direct'
    assert gmg.coarse.path == 'direct'


def test_hierarchy_operators_match_full_assembly():
    material = VoigtMaterial(lam=1.5, mu=0.8)
    gmg = build_gmg(build_cartesian_mesh((1.0, 1.0, 1.0), (1, 1, 1)), 3, 2, material, CLAMPED)
    rng = np.random.default_rng(2)
    for level in gmg.levels:
        reference = ConstrainedOperator(assemble_fa(level.space, material), level.bc)
        x = rng.standard_normal(level.ndof)
        expected = reference.mult(x)
        assert np.linalg.norm(level.operator.mult(x) - expected) <= 1e-12 * np.linalg.norm(expected)


def test_coarse_solve_small_examples():
    x = coarse_solve(sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]])), np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-14)
    b = np.array([3.0, -1.0, 0.5])
    np.testing.assert_allclose(coarse_solve(sp.identity(3, format='csr'), b), b, rtol=1e-15)


def test_two_level_linear_convergence_factor():
    result = solve_problem(default_benchmark(), 1, (2, 2, 2), levels=2, preconditioner='gmg', rel_tol=1e-8)
    assert result.report.converged
    assert result.report.convergence_factor() <= 0.5


def test_quadratic_three_cell_base_converges_quickly():
    result = solve_problem(default_benchmark(), 2, (3, 3, 3), levels=2, preconditioner='gmg', rel_tol=1e-8)
    assert result.report.converged
    assert result.report.iterations <= 25


@pytest.mark.parametrize('p', [1, 2])
def test_vcycle_is_linear(p):
    gmg = two_level(p=p)
    rng = np.random.default_rng(p)
    a, b = rng.standard_normal((2, gmg.finest.ndof))
    combined = gmg.apply(2.0 * a - b)
    expected = 2.0 * gmg.apply(a) - gmg.apply(b)
    assert np.linalg.norm(combined - expected) <= 1e-12 * np.linalg.norm(expected)

import numpy as np
import pytest
import sympy

from src.models.basis import default_basis
from src.models.material import VoigtMaterial, isotropic_stiffness
from src.models.space import BcSpec
from src.utils import verification
from src.utils.errors import InvalidArgumentError, SolverError, StudyError
from src.utils.problem import solve_problem
from src.utils.verification import (
    X,
    Y,
    Z,
    convergence_study,
    convergence_table,
    format_convergence,
    from_expressions,
    l2_error,
    manufactured_rhs,
    patch_fields,
    patch_test,
    sine_case,
    symbolic_body_force,
)
from tests.conftest import make_space, random_spd_stiffness


@pytest.mark.parametrize('lam, mu', [(1.0, 1.0), (3.0, 0.5)])
def test_sine_body_force_matches_symbolic_oracle(lam, mu):
    s = sympy.Rational(1, 10) * sympy.sin(sympy.pi * X) * sympy.sin(sympy.pi * Y) * sympy.sin(sympy.pi * Z)
    f = symbolic_body_force([s, s, s], isotropic_stiffness(lam, mu))
    f_fn = sympy.lambdify((X, Y, Z), f, 'numpy')
    rng = np.random.default_rng(0)
    x, y, z = rng.uniform(0, 1, (3, 50))
    expected = np.array([np.broadcast_to(v, x.shape) for v in f_fn(x, y, z)])
    actual = np.array(sine_case(lam, mu).body_force(x, y, z))
    np.testing.assert_allclose(actual, expected, atol=1e-12)


def test_linear_field_has_zero_body_force():
    case = from_expressions(('x', '0', '0'), lam=2.0, mu=3.0)
    x = np.linspace(0, 1, 7)
    for component in case.body_force(x, x, x):
        np.testing.assert_allclose(component, 0.0)


def test_quadratic_field_body_force():
    case = from_expressions(('x**2', '0', '0'), lam=0.0, mu=1.0)
    x = np.linspace(0, 1, 5)
    fx, fy, fz = (np.broadcast_to(v, x.shape) for v in case.body_force(x, x, x))
    np.testing.assert_allclose(fx, -4.0)
    np.testing.assert_allclose(fy, 0.0)
    np.testing.assert_allclose(fz, 0.0)


def test_linear_field_load_vector_vanishes():
    space = make_space(2, (2, 2, 2))
    F = manufactured_rhs(from_expressions(('x', 'y', '0')), space)
    np.testing.assert_allclose(F, 0.0, atol=1e-14)


@pytest.mark.parametrize('p', [2, 3, 4])
def test_load_vector_exact_for_polynomial_force(p):
    space = make_space(p, (2, 1, 1))
    case = from_expressions(('x**3*y', 'z**2', 'x*y*z'), lam=1.0, mu=1.0)
    F = manufactured_rhs(case, space, default_basis(p))
    F_over = manufactured_rhs(case, space, default_basis(p, p + 4))
    np.testing.assert_allclose(F, F_over, atol=1e-10 * np.abs(F_over).max())


def test_sine_load_vector_close_to_over_integration():
    space = make_space(2, (4, 4, 4))
    case = sine_case()
    F = manufactured_rhs(case, space)
    F_over = manufactured_rhs(case, space, default_basis(2, 6))
    assert np.linalg.norm(F - F_over) <= 1e-3 * np.linalg.norm(F_over)


@pytest.mark.parametrize('p', [1, 2, 3, 4])
def test_l2_error_of_exact_interpolant(p):
    space = make_space(p, (2, 1, 2))

    def field(x, y, z):
        return (x ** p * y, y ** p + z, z ** p * x + 1.0)

    error = l2_error(space, space.interpolate(field), field)
    assert error <= 1e-11 * max(1.0, np.abs(space.interpolate(field)).max())


def test_l2_error_of_unit_perturbation():
    space = make_space(2, (2, 2, 2))

    def field(x, y, z):
        return (x * y, 0.0, z)

    x = space.interpolate(field)
    x[:space.scalar_ndof] += 1.0
    assert l2_error(space, x, field) == pytest.approx(1.0, abs=1e-10)


def test_l2_error_of_zero_against_linear():
    space = make_space(1, (2, 2, 2))
    error = l2_error(space, np.zeros(space.vector_ndof), lambda x, y, z: (x, 0.0, 0.0))
    assert error == pytest.approx(np.sqrt(1.0 / 3.0), abs=1e-12)


@pytest.mark.parametrize('p, fields', [
    (1, ('x', '0', '0')),
    (2, ('x*y', 'y*z', '0')),
])
def test_patch_test_passes(p, fields):
    passed, error = patch_test(make_space(p, (2, 2, 2)), VoigtMaterial(), BcSpec.all_faces(), fields)
    assert passed, error


def test_patch_test_rejects_varying_material():
    space = make_space(1, (2, 1, 1))
    per_element = VoigtMaterial(lam=np.array([1.0, 2.0]), mu=np.array([1.0, 1.5]))
    with pytest.raises(InvalidArgumentError):
        patch_test(space, per_element, BcSpec.all_faces())
    per_point = VoigtMaterial(C=np.broadcast_to(random_spd_stiffness(1), (2, 8, 6, 6)))
    with pytest.raises(InvalidArgumentError):
        patch_test(space, per_point, BcSpec.all_faces())


def test_patch_test_with_constant_anisotropic_material_on_stretched_box():
    space = make_space(1, (2, 1, 1), (2.0, 1.0, 0.5))
    passed, error = patch_test(space, VoigtMaterial(C=random_spd_stiffness(3)), BcSpec.all_faces(), ('y', 'z', 'x'))
    assert passed, error


def test_patch_test_detects_unrepresentable_field():
    passed, error = patch_test(make_space(2, (2, 2, 2)), VoigtMaterial(), BcSpec.all_faces(), ('x**3', '0', '0'))
    assert not passed
    assert error > 1e-6


@pytest.mark.slow
@pytest.mark.parametrize('p', [1, 2, 3, 4])
@pytest.mark.parametrize('cells', [(1, 1, 1), (2, 1, 2), (2, 2, 2)])
def test_patch_tests_all_orders(p, cells):
    for material in (VoigtMaterial(lam=2.0, mu=0.7), VoigtMaterial(C=random_spd_stiffness(p))):
        for fields in patch_fields(p):
            passed, error = patch_test(make_space(p, cells), material, BcSpec.all_faces(), fields)
            assert passed, (fields, error)


def test_variants_give_the_same_solution():
    problem = sine_case().to_problem()
    solutions = [
        solve_problem(problem, 2, (2, 2, 2), levels=1, assembly=assembly,
                      preconditioner='jacobi', rel_tol=1e-10, max_iters=2000).solution
        for assembly in ('fa', 'pa', 'paop')
    ]
    for other in solutions[1:]:
        assert np.linalg.norm(other - solutions[0]) <= 1e-9 * np.linalg.norm(solutions[0])


@pytest.mark.slow
@pytest.mark.parametrize('p', [1, 2, 3])
def test_convergence_rates(p):
    rows = convergence_study(sine_case(), p, max_levels=4)
    errors = [row.l2_error for row in rows]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert rows[0].rate is None
    assert rows[-1].rate >= p + 0.7


def test_convergence_rate_bands_for_low_orders():
    rows = convergence_study(sine_case(), 1, max_levels=3)
    assert len(rows) == 3
    assert 1.5 <= rows[-1].rate <= 2.5
    table = convergence_table(rows)
    assert list(table.columns) == ['level', 'h', 'scalar_ndof', 'l2_error', 'rate']
    assert '-' in format_convergence(rows)


def test_study_error_names_failing_level(monkeypatch):
    calls = []

    def failing(*args, **kwargs):
        calls.append(kwargs.get('levels'))
        if len(calls) == 2:
            raise SolverError("breakdown")
        return solve_problem(*args, **kwargs)

    monkeypatch.setattr(verification, 'solve_problem', failing)
    with pytest.raises(StudyError) as info:
        convergence_study(sine_case(), 1, max_levels=3)
    assert info.value.level == 1

import numpy as np
import numpy.polynomial.polynomial as P
import pytest
from scipy.special import roots_legendre

from src.errors import DomainError, ProblemValidationError
from src.problems import random_problem
from src.sturm_form import (MatrixPolynomial, SturmProblem, assemble_boundary_map, assemble_operator, rescale,
                            rescale_derivative, rescaled_problem, sesquilinear_form, validate)

from .conftest import C_A, assert_allclose

# ### MatrixPolynomial


def test_polynomial_evaluation_scalar_and_array():
    p = MatrixPolynomial.from_terms([(0, [[1.0]]), (2, [[3.0]])], 1)
    assert p.degree == 2
    assert_allclose(p(2.0), [[13.0]])
    assert_allclose(p(np.array([0.0, 1.0]))[:, 0, 0], [1.0, 4.0])


def test_polynomial_trims_trailing_zeros():
    p = MatrixPolynomial(np.array([[[1.0]], [[0.0]], [[0.0]]]))
    assert p.degree == 0
    assert p.is_constant()


def test_polynomial_derivative_substitute_times_x():
    p = MatrixPolynomial.from_terms([(1, [[2.0]]), (3, [[1.0]])], 1)  # 2x + x^3
    assert_allclose(p.derivative()(2.0), [[14.0]])
    assert_allclose(p.derivative(2)(2.0), [[12.0]])
    assert p.derivative(4).is_zero()
    assert_allclose(p.substitute(0.5)(2.0), p(1.0))
    assert_allclose(p.times_x()(2.0), 2.0 * p(2.0))


def test_polynomial_matches_entrywise_scalar_polynomials():
    rng = np.random.default_rng(2)
    coeffs = rng.standard_normal((4, 2, 3)) + 1j * rng.standard_normal((4, 2, 3))
    p = MatrixPolynomial(coeffs)
    xs = np.array([-0.5, 0.3, 1.0])
    values, slopes = p(xs), p.derivative()(xs)
    assert values.shape == (3, 2, 3)
    for r in range(2):
        for c in range(3):
            assert_allclose(values[:, r, c], P.polyval(xs, coeffs[:, r, c]), atol=1e-12)
            assert_allclose(slopes[:, r, c], P.polyval(xs, P.polyder(coeffs[:, r, c])), atol=1e-12)
    assert_allclose(p(0.3), values[1], atol=1e-12)


def test_polynomial_algebra():
    a = MatrixPolynomial.from_terms([(0, np.eye(2))], 2)
    b = MatrixPolynomial.from_terms([(1, np.diag([1.0, 2.0]))], 2)
    total = a + b * 2.0
    assert_allclose(total(1.0), np.diag([3.0, 5.0]))
    assert (total - total).is_zero()
    assert b.is_hermitian()
    assert not MatrixPolynomial.constant([[0.0, 1.0], [0.0, 0.0]]).is_hermitian()


# ### validate


def test_validate_accepts_canonical(p0, pa, pb, pc):
    for problem in (p0, pa, pb, pc):
        assert validate(problem) is problem


def test_validate_reports_leading_mismatch():
    problem = SturmProblem.from_upper(1, 2, 1, {(1, 1): np.eye(2)})
    with pytest.raises(ProblemValidationError) as info:
        validate(problem)
    assert any('leading symmetry mismatch' in line and 'omega[1][1]' in line for line in info.value.diagnostics)


def test_validate_reports_non_hermitian_entry():
    bad = np.array([[0.0, 1.0], [2.0, 0.0]])
    problem = SturmProblem.from_upper(1, 2, 0, {(1, 1): np.eye(2), (0, 1): bad})
    with pytest.raises(ProblemValidationError) as info:
        validate(problem)
    assert any('omega[0][1]' in line and 'not Hermitian' in line for line in info.value.diagnostics)


def test_validate_reports_index_symmetry_violation():
    problem = SturmProblem.from_upper(1, 1, 0, {(1, 1): np.eye(1)})
    omega = dict(problem.omega)
    omega[(0, 1)] = MatrixPolynomial.constant([[1.0]])
    with pytest.raises(ProblemValidationError) as info:
        validate(problem.with_omega(omega))
    assert any('index-symmetry violation' in line for line in info.value.diagnostics)


def test_validate_rejects_bad_orders():
    with pytest.raises(ProblemValidationError):
        validate(SturmProblem.from_upper(1, 1, 2, {(1, 1): np.eye(1)}))


def test_validate_rejects_nonconstant_leading():
    leading = MatrixPolynomial.from_terms([(0, np.eye(1)), (1, np.eye(1))], 1)
    with pytest.raises(ProblemValidationError):
        validate(SturmProblem.from_upper(1, 1, 0, {(1, 1): leading}))


# ### assemble_operator


def test_operator_prob_0(p0):
    coeffs = assemble_operator(p0)
    assert_allclose(coeffs.p(2)(0.0), [[-1.0]])
    assert coeffs.p(1).is_zero()
    assert coeffs.p(0).is_zero()


def test_operator_prob_a(pa):
    coeffs = assemble_operator(pa)
    assert_allclose(coeffs.p(2)(0.0), [[-1.0]])
    assert_allclose(coeffs.p(0)(0.0), [[-C_A]], atol=1e-10)
    assert coeffs.leading_sign == -1


def test_operator_prob_c(pc):
    coeffs = assemble_operator(pc)
    assert_allclose(coeffs.p(4)(0.0), [[1.0]])
    for k in (1, 2, 3):
        assert coeffs.p(k).is_zero()


def test_operator_first_order_cross_term():
    # omega_01 = omega_10 = x gives -(x u)' + x u' = -u
    x = MatrixPolynomial.from_terms([(1, [[1.0]])], 1)
    problem = SturmProblem.from_upper(1, 1, 0, {(1, 1): np.eye(1), (0, 1): x})
    coeffs = assemble_operator(problem)
    assert_allclose(coeffs.p(0)(0.3), [[-1.0]])
    assert coeffs.p(1).is_zero()


# ### assemble_boundary_map


def test_boundary_map_prob_a(pa):
    bmap = assemble_boundary_map(pa)
    assert_allclose(bmap.evaluate(0.5), [[0.0, 1.0]])
    assert bmap.antidiagonal_ok(pa.symmetry)


def test_boundary_map_prob_c(pc):
    bmap = assemble_boundary_map(pc)
    A = bmap.evaluate(0.0)
    assert A.shape == (2, 4)
    assert_allclose(A, [[0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0]])
    assert bmap.antidiagonal_ok(pc.symmetry)


def test_boundary_map_prob_b_antidiagonal(pb):
    bmap = assemble_boundary_map(pb)
    assert_allclose(bmap.block(0, 1)(0.0), np.diag([1.0, -1.0]))
    assert bmap.antidiagonal_ok(pb.symmetry)


# ### rescale


def test_rescale_prob_a(pa):
    table = rescale(pa, 0.5)
    assert_allclose(table[(0, 0)](0.7), [[-0.25 * C_A]], atol=1e-10)
    assert_allclose(table[(1, 1)](0.7), [[1.0]])


def test_rescale_at_zero_keeps_top_order(pb):
    table = rescale(pb, 0.0)
    assert table[(0, 0)].is_zero()
    assert_allclose(table[(1, 1)](0.2), np.diag([1.0, -1.0]))


def test_rescale_derivative_prob_b(pb):
    table = rescale_derivative(pb, 0.5)
    assert_allclose(table[(0, 0)](0.3), pb.omega[(0, 0)](0.0), atol=1e-10)
    assert table[(1, 1)].is_zero()


def test_rescale_derivative_with_x_dependence():
    x = MatrixPolynomial.from_terms([(1, [[1.0]])], 1)
    problem = SturmProblem.from_upper(1, 1, 0, {(1, 1): np.eye(1), (0, 0): x})
    # omega^lam_00 = lam^3 x, derivative 3 lam^2 x
    assert_allclose(rescale_derivative(problem, 0.5)[(0, 0)](0.8), [[3 * 0.25 * 0.8]])


def test_rescale_derivative_matches_difference_quotient():
    x2 = MatrixPolynomial.from_terms([(0, [[1.0]]), (2, [[-2.0]])], 1)
    problem = SturmProblem.from_upper(2, 1, 0, {(2, 2): np.eye(1), (0, 1): x2, (1, 1): x2})
    lam, h = 0.6, 1e-5
    for key in ((0, 1), (1, 1)):
        quotient = (rescale(problem, lam + h)[key](0.4) - rescale(problem, lam - h)[key](0.4)) / (2 * h)
        assert_allclose(rescale_derivative(problem, lam)[key](0.4), quotient, atol=1e-8)


def test_rescale_rejects_lambda_outside_interval(pa):
    with pytest.raises(DomainError):
        rescale(pa, 1.5)
    with pytest.raises(DomainError):
        rescale_derivative(pa, -0.1)


def test_rescaled_problem_stays_valid(pb):
    validate(rescaled_problem(pb, 0.3))


# ### integration by parts


def _poly_jet(coeffs, xs, order):
    """(len(xs), order*n) stacked derivatives of a vector polynomial with coefficients (deg+1, n)."""
    blocks = [P.polyval(xs, P.polyder(coeffs, r, axis=0)).T for r in range(order)]
    return np.concatenate(blocks, axis=1)


@pytest.mark.parametrize('seed', range(6))
def test_form_equals_operator_plus_boundary_terms(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, m=1 + seed % 2, n=1 + seed % 3)
    m, n = problem.m, problem.n
    v = rng.standard_normal((5, n)) + 1j * rng.standard_normal((5, n))
    u = rng.standard_normal((6, n)) + 1j * rng.standard_normal((6, n))
    t, w = roots_legendre(24)
    xs, weights = 0.5 * (t + 1.0), 0.5 * w

    jets_v = _poly_jet(v, xs, 2 * m)[:, :, None]
    jets_u = _poly_jet(u, xs, 2 * m)[:, :, None]
    q = sesquilinear_form(problem.table, jets_v, jets_u, xs, weights)[0, 0]

    coeffs = assemble_operator(problem)
    lu = sum(np.einsum('qst,qt->qs', coeffs.p(k)(xs), jets_u[:, k * n:(k + 1) * n, 0]) for k in range(2 * m + 1))
    interior = np.sum(weights * np.einsum('qs,qs->q', jets_v[:, :n, 0].conj(), lu))
    bmap = assemble_boundary_map(problem)
    ends = np.array([0.0, 1.0])
    v_ends, u_ends = _poly_jet(v, ends, 2 * m), _poly_jet(u, ends, 2 * m)
    boundary = bmap.pairing(1.0, v_ends[1], u_ends[1]) - bmap.pairing(0.0, v_ends[0], u_ends[0])

    assert abs(q - (interior + boundary)) <= 1e-9 * max(1.0, abs(q))


def test_rescale_matches_definition_at_random_points():
    rng = np.random.default_rng(11)
    problem = random_problem(rng, m=2, n=2)
    for lam, x in rng.uniform(0.0, 1.0, (50, 2)):
        table = rescale(problem, lam)
        for (i, j), omega in problem.omega.items():
            expected = lam ** (2 * problem.m - i - j) * omega(lam * x)
            assert_allclose(table[(i, j)](x), expected, atol=1e-11)

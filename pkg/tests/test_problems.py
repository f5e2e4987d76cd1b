import numpy as np
import pytest

from src.oracle import oracle_zero_count
from src.problems import (CANONICAL, clamped_beam_root, direct_sum, mirrored_problem, prob_a, prob_b, prob_c,
                          random_crossing_problem, random_hermitian)
from src.sturm_form import validate

from .conftest import C_A, assert_allclose


def test_canonical_problems_are_valid():
    for build in CANONICAL.values():
        validate(build())


def test_clamped_beam_root():
    k1 = clamped_beam_root()
    assert_allclose(k1, 4.730040744862704, atol=1e-12)
    assert abs(np.cos(k1) * np.cosh(k1) - 1.0) < 1e-10


def test_random_hermitian_bound():
    H = random_hermitian(np.random.default_rng(0), 4, 2.0)
    assert_allclose(H, H.conj().T, atol=0.0)
    assert np.max(np.abs(H)) <= 2.0


def test_mirrored_prob_a_is_coincident_prob_b():
    mirrored = mirrored_problem(prob_a())
    expected = prob_b(C_A, C_A)
    assert (mirrored.n, mirrored.nu) == (2, 1)
    for key, poly in expected.omega.items():
        assert mirrored.omega[key].allclose(poly, atol=1e-12)
    with pytest.raises(ValueError):
        mirrored_problem(prob_b())


def test_direct_sum_orders_positive_directions_first():
    total = direct_sum(prob_b(), prob_a())
    validate(total)
    assert (total.n, total.nu) == (3, 1)
    assert_allclose(total.omega[(1, 1)](0.0), np.diag([1.0, 1.0, -1.0]), atol=0.0)
    assert_allclose(total.omega[(0, 0)](0.0), np.diag([-(1.5 * np.pi) ** 2, -C_A, C_A]), atol=1e-12)
    with pytest.raises(ValueError):
        direct_sum(prob_a(), prob_c())


def test_crossing_problem_shifts_zero_order_term():
    problem = random_crossing_problem(np.random.default_rng(1), m=1, n=2, nu=1, magnitude=0.0, kappa=2.0 * np.pi)
    validate(problem)
    assert_allclose(problem.omega[(0, 0)](0.5), -4 * np.pi ** 2 * np.diag([1.0, -1.0]), atol=1e-12)
    assert problem.omega[(0, 1)].is_zero()


@pytest.mark.parametrize('seed', range(5))
def test_scalar_crossing_problems_have_instants(seed):
    problem = random_crossing_problem(np.random.default_rng(seed), m=1, n=1, nu=0)
    assert oracle_zero_count(problem) >= 1

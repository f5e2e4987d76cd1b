"""
Canonical and randomized Sturm problems.

The canonical problems have constant coefficients and closed-form
conjugate instants; the random generator feeds the randomized suite.
"""

from typing import Optional

import numpy as np
from scipy.optimize import bisect

from .sturm_form import MatrixPolynomial, SturmProblem, symmetry_matrix

PROB_A_C = (2.5 * np.pi) ** 2
PROB_B_C1 = (1.5 * np.pi) ** 2
PROB_B_C2 = (2.5 * np.pi) ** 2


def prob_0() -> SturmProblem:
    """-u'' with no zero-order term; no conjugate instants."""
    return SturmProblem.from_upper(1, 1, 0, {(1, 1): np.eye(1)})


def prob_a(c: float = PROB_A_C) -> SturmProblem:
    """Scalar |u'|^2 - c|u|^2; instants at k pi / sqrt(c)."""
    return SturmProblem.from_upper(1, 1, 0, {(1, 1): np.eye(1), (0, 0): -c * np.eye(1)})


def prob_b(c1: float = PROB_B_C1, c2: float = PROB_B_C2) -> SturmProblem:
    """Decoupled indefinite pair: block 1 like prob_a(c1), block 2 the negative of prob_a(c2)."""
    return SturmProblem.from_upper(1, 2, 1, {(1, 1): np.diag([1.0, -1.0]), (0, 0): np.diag([-c1, c2])})


def clamped_beam_root(lower: float = 4.0, upper: float = 5.5) -> float:
    """First positive root of cos k cosh k = 1."""
    return bisect(lambda k: np.cos(k) * np.cosh(k) - 1.0, lower, upper, xtol=1e-14)


def prob_c(c: Optional[float] = None) -> SturmProblem:
    """|u''|^2 - c|u|^2; default c = (1.2 k1)^4 puts one instant at 1/1.2."""
    c = (1.2 * clamped_beam_root()) ** 4 if c is None else c
    return SturmProblem.from_upper(2, 1, 0, {(2, 2): np.eye(1), (0, 0): -c * np.eye(1)})


CANONICAL = {
    'PROB-0': prob_0,
    'PROB-A': prob_a,
    'PROB-B': prob_b,
    'PROB-C': prob_c,
}


def random_hermitian(rng: np.random.Generator, n: int, magnitude: float) -> np.ndarray:
    """Hermitian matrix whose entries have modulus at most magnitude."""
    bound = magnitude / np.sqrt(2.0)
    R = rng.uniform(-bound, bound, (n, n)) + 1j * rng.uniform(-bound, bound, (n, n))
    return 0.5 * (R + R.conj().T)


def random_problem(rng: np.random.Generator, m: Optional[int] = None, n: Optional[int] = None,
                   nu: Optional[int] = None, max_degree: int = 2, magnitude: float = 5.0) -> SturmProblem:
    """
    Random problem with Hermitian polynomial coefficients.

    Unspecified orders are drawn from m in {1, 2}, n in {1, 2, 3}, nu in {0..n};
    every lower-order entry gets a random degree up to max_degree.
    """
    m = int(rng.integers(1, 3)) if m is None else m
    n = int(rng.integers(1, 4)) if n is None else n
    nu = int(rng.integers(0, n + 1)) if nu is None else nu
    # 最高阶项固定为 p_{2m}，其余各项随机
    entries = {(m, m): MatrixPolynomial.constant(symmetry_matrix(n, nu))}
    for i in range(m + 1):
        for j in range(i, m + 1):
            if (i, j) == (m, m):
                continue
            degree = int(rng.integers(0, max_degree + 1))
            terms = [(d, random_hermitian(rng, n, magnitude)) for d in range(degree + 1)]
            entries[(i, j)] = MatrixPolynomial.from_terms(terms, n)
    return SturmProblem.from_upper(m, n, nu, entries)


# kappa / pi ranges putting one to three instants in (0, 1) for m = 1 and one for m = 2
CROSSING_KAPPA = {1: (1.2, 3.2), 2: (1.6, 2.4)}


def random_crossing_problem(rng: np.random.Generator, m: Optional[int] = None, n: Optional[int] = None,
                            nu: Optional[int] = None, max_degree: int = 2, magnitude: float = 0.5,
                            kappa: Optional[float] = None) -> SturmProblem:
    """
    Random problem with omega_{0,0} shifted by -kappa^{2m} p_{2m}.

    The shift moves every component past its lowest Dirichlet eigenvalue, so
    the family has conjugate instants; magnitude keeps the random terms small
    against that margin.
    """
    m = int(rng.integers(1, 3)) if m is None else m
    base = random_problem(rng, m, n, nu, max_degree, magnitude)
    if kappa is None:
        lower, upper = CROSSING_KAPPA[m]
        kappa = rng.uniform(lower, upper) * np.pi
    # 零阶项整体下移
    omega = dict(base.omega)
    shift = MatrixPolynomial.constant(-(kappa ** (2 * m)) * base.symmetry)
    omega[(0, 0)] = omega[(0, 0)] + shift
    return base.with_omega(omega)


def direct_sum(first: SturmProblem, second: SturmProblem) -> SturmProblem:
    """
    Block-diagonal problem on C^{n1} + C^{n2}.

    Components are reordered so the positive directions of both blocks come
    first, keeping p_{2m} = diag(I_{n-nu}, -I_nu).
    """
    if first.m != second.m:
        raise ValueError(f"blocks must share the half-order, got m={first.m} and m={second.m}")
    n1, n = first.n, first.n + second.n
    p1, p2 = first.n - first.nu, second.n - second.nu
    order = [*range(p1), *range(n1, n1 + p2), *range(p1, n1), *range(n1 + p2, n)]
    omega = {}
    for key, a in first.omega.items():
        b = second.omega[key]
        coeffs = np.zeros((max(a.degree, b.degree) + 1, n, n), dtype=complex)
        coeffs[:a.degree + 1, :n1, :n1] = a.coeffs
        coeffs[:b.degree + 1, n1:, n1:] = b.coeffs
        omega[key] = MatrixPolynomial(coeffs[:, order][:, :, order])
    return SturmProblem(m=first.m, n=n, nu=first.nu + second.nu, omega=omega)


def mirrored_problem(problem: SturmProblem) -> SturmProblem:
    """
    Omega + (-Omega) on C^n + C^n.

    Every conjugate instant of a nu = 0 problem comes back twice with opposite
    signs, so the crossings cancel and the index is 0.
    """
    if problem.nu != 0:
        raise ValueError(f"mirroring needs nu = 0, got nu = {problem.nu}")
    negated = {key: -poly for key, poly in problem.omega.items()}
    return direct_sum(problem, SturmProblem(m=problem.m, n=problem.n, nu=problem.n, omega=negated))

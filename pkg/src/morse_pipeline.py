"""
Regularized Morse index as the spectral flow of the Galerkin family.

q_lam is discretized on x^m (1-x)^m L_k(2x-1) tensored with C^n. Spectral flow
follows the crossing-sum convention sf = n_minus(start) - n_minus(end), once
by the inertia difference and once by summing crossing-form signatures.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np
import scipy.linalg
from numpy.polynomial import Legendre, Polynomial
from scipy.special import roots_legendre

from .config_loader import Settings
from .errors import (ConvergenceError, DomainError, EndpointDegeneracyError, MethodDisagreementError,
                     NonRegularCrossingError, RegularizationError, RegularizationRequired)
from .hermitian import (Inertia, TolerancePolicy, inertia, kernel_basis, min_abs_eigenvalue, regular_crossing,
                        restrict_form)
from .sturm_form import CoefficientTable, MatrixPolynomial, SturmProblem, rescale, rescale_derivative
from .superlag import scan_minima

T = TypeVar('T')


class GalerkinBasis:
    """phi_k(x) = x^m (1-x)^m L_k(2x-1), k < N, each tensored with the n coordinate directions."""

    def __init__(self, m: int, n: int, N: int):
        if N < m + 1:
            raise DomainError(f"Galerkin size N must be >= m + 1 = {m + 1}, got {N}")
        self.m, self.n, self.N = m, n, N
        # x^m (1-x)^m 保证 m 阶边界条件
        bubble = (Polynomial([0.0, 1.0]) ** m * Polynomial([1.0, -1.0]) ** m).convert(kind=Legendre, domain=[0, 1])
        self.functions = [bubble * Legendre.basis(k, domain=[0, 1]) for k in range(N)]

    @property
    def dimension(self) -> int:
        return self.N * self.n

    @property
    def degree(self) -> int:
        return self.N - 1 + 2 * self.m

    def derivatives(self, xs: np.ndarray, order: Optional[int] = None) -> np.ndarray:
        """Array (len(xs), order + 1, N) of phi_k^{(i)}(x)."""
        order = self.m if order is None else order
        out = np.empty((len(xs), order + 1, self.N))
        for k, phi in enumerate(self.functions):
            for i in range(order + 1):
                out[:, i, k] = phi.deriv(i)(xs) if i else phi(xs)
        return out


@lru_cache(maxsize=64)
def _gauss_legendre(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    t, w = roots_legendre(nodes)
    return 0.5 * (t + 1.0), 0.5 * w


def quadrature_nodes(basis: GalerkinBasis, coefficient_degree: int) -> int:
    """Gauss-Legendre nodes exact for degree 2(N-1+2m) + deg(omega)."""
    return math.ceil((2 * basis.degree + coefficient_degree + 1) / 2)


def assemble(table: CoefficientTable, basis: GalerkinBasis) -> np.ndarray:
    """G[(a, s), (b, t)] = sum_{i,j} int phi_a^{(i)} phi_b^{(j)} omega_{i,j}[s, t] dx."""
    xs, weights = _gauss_legendre(quadrature_nodes(basis, table.max_degree))
    values = basis.derivatives(xs)
    n, N = basis.n, basis.N
    G = np.zeros((N, n, N, n), dtype=complex)
    # 逐项累加 omega_{i,j} 的贡献
    for (i, j), omega in table.entries.items():
        if omega.is_zero():
            continue
        G += np.einsum('q,qa,qb,qst->asbt', weights, values[:, i, :], values[:, j, :], omega(xs))
    G = G.reshape(N * n, N * n)
    return 0.5 * (G + G.conj().T)


@dataclass
class GramFamily:
    """lam -> G_N(lam) with its exact derivative and the congruence-normalized versions."""
    problem: SturmProblem
    basis: GalerkinBasis
    _factor: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def build(cls, problem: SturmProblem, N: int) -> "GramFamily":
        return cls(problem, GalerkinBasis(problem.m, problem.n, N))

    def gram(self, lam: float) -> np.ndarray:
        return assemble(rescale(self.problem, lam), self.basis)

    def derivative(self, lam: float) -> np.ndarray:
        return assemble(rescale_derivative(self.problem, lam), self.basis)

    @property
    def factor(self) -> np.ndarray:
        """kron(chol(S_top), I_n) with S_top the Gram matrix of the m-th derivatives."""
        if self._factor is None:
            m, n = self.problem.m, self.problem.n
            top = CoefficientTable(m, 1, {(m, m): MatrixPolynomial.identity(1)})
            # 最高阶刚度矩阵与 lambda 无关，只分解一次
            stiffness = assemble(top, GalerkinBasis(m, 1, self.basis.N)).real
            self._factor = np.kron(scipy.linalg.cholesky(stiffness, lower=True), np.eye(n))
        return self._factor

    def _congruence(self, G: np.ndarray) -> np.ndarray:
        L = self.factor
        half = scipy.linalg.solve_triangular(L, G, lower=True)
        out = scipy.linalg.solve_triangular(L, half.conj().T, lower=True).conj().T
        return 0.5 * (out + out.conj().T)

    def normalized(self, lam: float) -> np.ndarray:
        return self._congruence(self.gram(lam))

    def normalized_derivative(self, lam: float) -> np.ndarray:
        return self._congruence(self.derivative(lam))


def gram(problem: SturmProblem, lam: float, N: int) -> np.ndarray:
    """Galerkin matrix of q_lam on N basis polynomials per direction."""
    return GramFamily.build(problem, N).gram(lam)


@dataclass
class GalerkinCrossing:
    lam: float
    kernel_dim: int
    form: np.ndarray = field(repr=False)
    inertia: Inertia
    cluster_dim: int = 0

    @property
    def regular(self) -> bool:
        return regular_crossing(self.inertia, self.kernel_dim)

    @property
    def signature(self) -> int:
        return self.inertia.signature


def endpoint_inertias(family: GramFamily, tol: TolerancePolicy = TolerancePolicy()) -> Tuple[Inertia, Inertia]:
    """
    Inertias of the normalized Gram matrices at lam = 0 and lam = 1.

    Raises:
        EndpointDegeneracyError: if either endpoint is degenerate
    """
    start, end = inertia(family.normalized(0.0), tol), inertia(family.normalized(1.0), tol)
    for lam, value in ((0.0, start), (1.0, end)):
        if not value.nondegenerate:
            raise EndpointDegeneracyError(f"Galerkin form degenerate at lambda = {lam:g} (inertia {value.as_tuple()})",
                                          lam=lam)
    return start, end


def spectral_flow_inertia(problem: SturmProblem, N: int, tol: TolerancePolicy = TolerancePolicy(),
                          family: Optional[GramFamily] = None) -> int:
    """n_minus(G_N(0)) - n_minus(G_N(1))."""
    family = GramFamily.build(problem, N) if family is None else family
    start, end = endpoint_inertias(family, tol)
    return start.n_minus - end.n_minus


def spectral_flow_crossings(problem: SturmProblem, N: int, tol: TolerancePolicy = TolerancePolicy(),
                            points: int = 512, xtol: float = 1e-12,
                            family: Optional[GramFamily] = None) -> Tuple[int, List[GalerkinCrossing]]:
    """
    Spectral flow as the sum of crossing-form signatures of the discrete family.

    Raises:
        EndpointDegeneracyError: if an endpoint is degenerate
        NonRegularCrossingError: if a discrete crossing form is degenerate
    """
    # 端点退化时直接报错
    family = GramFamily.build(problem, N) if family is None else family
    endpoint_inertias(family, tol)
    detection = tol.for_detection()

    def indicator(lam: float) -> float:
        G = family.normalized(lam)
        return min_abs_eigenvalue(G) / max(1.0, float(np.max(np.abs(scipy.linalg.eigvalsh(G)))))

    # 扫描离散族的交叉点
    crossings = []
    for lam0 in scan_minima(indicator, 0.0, 1.0, points, xtol, tol.detect_rel_tol):
        G = family.normalized(lam0)
        kernel = kernel_basis(G, detection)
        if not kernel:
            continue
        # nearly coincident crossings share one form on their joint near-kernel
        cluster = kernel_basis(G, tol.for_clusters())
        basis = cluster if len(cluster) > len(kernel) else kernel
        form = restrict_form(family.normalized_derivative(lam0), basis, tol)
        crossings.append(GalerkinCrossing(lam0, len(kernel), form, inertia(form, tol), cluster_dim=len(basis)))
        logging.debug(f"Galerkin crossing N={N} at {lam0:.12g}: inertia {crossings[-1].inertia.as_tuple()}")

    irregular = [c.lam for c in crossings if not c.regular]
    if irregular:
        raise NonRegularCrossingError(irregular)
    return sum(c.signature for c in crossings), crossings


@dataclass
class MorseResult:
    index: int
    N: int
    history: Dict[int, int]
    crossings: List[GalerkinCrossing] = field(default_factory=list)
    classical_morse_index: Optional[int] = None


def morse_index(problem: SturmProblem, settings: Settings = Settings(), n_start: Optional[int] = None,
                check_crossings: bool = True) -> MorseResult:
    """
    Spectral flow certified by equal values at three consecutive Galerkin sizes.

    Args:
        problem: validated problem
        settings: run settings (galerkin sizes, tolerances, scan)
        n_start: first Galerkin size, overriding settings.galerkin.n_start
        check_crossings: cross-check against the crossing sum at the largest size

    Returns:
        MorseResult with the index, the first certified N and the per-N history

    Raises:
        ConvergenceError: if no three consecutive sizes agree up to the maximal size
        MethodDisagreementError: if the crossing sum differs from the inertia difference
    """
    tol = settings.tolerances
    galerkin = settings.galerkin
    N = galerkin.n_start if n_start is None else n_start
    n_max = max(galerkin.n_max, N + 2 * galerkin.n_step)
    history: Dict[int, int] = {}
    families: Dict[int, GramFamily] = {}
    sizes: List[int] = []
    # 逐步加大 N，直到连续三个尺寸结果一致
    while N <= n_max:
        families[N] = GramFamily.build(problem, N)
        history[N] = spectral_flow_inertia(problem, N, tol, families[N])
        sizes.append(N)
        logging.info(f"Galerkin N={N}: spectral flow {history[N]}")
        if len(sizes) >= 3 and len({history[k] for k in sizes[-3:]}) == 1:
            break
        N += galerkin.n_step
    else:
        raise ConvergenceError(f"Galerkin spectral flow did not stabilize up to N={n_max}: {history}")

    # 在最大尺寸上用交叉和复核
    certified, largest = sizes[-3], sizes[-1]
    index = history[largest]
    result = MorseResult(index=index, N=certified, history=history)
    if check_crossings:
        total, crossings = spectral_flow_crossings(problem, largest, tol, settings.scan.points,
                                                   settings.scan.refine_xtol, families[largest])
        if total != index:
            raise MethodDisagreementError(
                f"inertia difference {index} and crossing sum {total} disagree at N={largest}")
        result.crossings = crossings
    # 经典 Morse 指标只对 nu = 0 有意义
    if problem.nu == 0:
        start, end = endpoint_inertias(families[largest], tol)
        result.classical_morse_index = end.n_minus - start.n_minus
    logging.info(f"Morse index {index} certified from N={certified}.")
    return result


def delta_regularize(problem: SturmProblem, delta: float) -> SturmProblem:
    """Shift omega_{0,0} by 3 delta / 2 times the identity."""
    if delta < 0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        return problem
    omega = dict(problem.omega)
    omega[(0, 0)] = omega[(0, 0)] + MatrixPolynomial.constant(1.5 * delta * np.eye(problem.n))
    return problem.with_omega(omega)


def draw_delta(settings: Settings, rng: np.random.Generator) -> float:
    return float(rng.uniform(settings.regularization.delta_min, settings.regularization.delta_max))


def find_regularization(problem: SturmProblem, settings: Settings, attempt: Callable[[SturmProblem], T],
                        rng: Optional[np.random.Generator] = None) -> Tuple[T, float]:
    """
    Run attempt on delta-regularized copies until one needs no further regularization.

    Returns:
        the attempt's result and the delta that produced it

    Raises:
        RegularizationError: if every draw still requires regularization
    """
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    reasons = []
    for draw in range(settings.regularization.max_draws):
        # 按种子抽取 delta
        delta = draw_delta(settings, rng)
        logging.info(f"Regularization draw {draw + 1}: delta = {delta:.6g}")
        try:
            return attempt(delta_regularize(problem, delta)), delta
        except RegularizationRequired as exc:
            logging.warning(f"delta = {delta:.6g} insufficient: {exc}")
            reasons.append(str(exc))
    raise RegularizationError(
        f"problem still degenerate after {settings.regularization.max_draws} delta draws: {'; '.join(reasons)}")

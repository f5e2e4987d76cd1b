"""
First-order reduction and shooting for l_lambda(x, D) u = 0.

Solutions are carried as stacked jets (u, u', ..., u^{(2m-1)}) integrated by
scipy's DOP853 pair with dense output. Several columns are integrated at once
so one solve yields a whole fundamental block.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as npoly
from scipy.integrate import solve_ivp

from .errors import DomainError, EmptyKernelError, IntegrationError
from .hermitian import TolerancePolicy
from .sturm_form import OperatorCoefficients, SturmProblem, assemble_operator

RESIDUAL_STEP = 2e-3


@dataclass(frozen=True)
class FirstOrderSystem:
    """Y' = M(x) Y with M stored as stacked matrix-polynomial coefficients."""
    m: int
    n: int
    lam: float
    blocks: np.ndarray  # (degree + 1, 2mn, 2mn)

    @property
    def dimension(self) -> int:
        return 2 * self.m * self.n

    def matrix(self, x: float) -> np.ndarray:
        return npoly.polyval(x, self.blocks)

    def rhs(self, x: float, y: np.ndarray) -> np.ndarray:
        dim = self.dimension
        return (self.matrix(x) @ y.reshape(dim, -1)).reshape(-1)


def to_first_order(coeffs: OperatorCoefficients, lam: float) -> FirstOrderSystem:
    """
    Companion reduction of the rescaled operator
    l_lam = p_{2m} D^{2m} + sum_k lam^{2m-k} p_k(lam x) D^k.
    """
    lam = float(lam)
    if not 0.0 < lam <= 1.0:
        raise DomainError(f"lambda must lie in (0, 1], got {lam}")
    m, n = coeffs.m, coeffs.n
    order = 2 * m
    dim = order * n
    leading = coeffs.leading
    # p_{2m} = +-diag(1, .., -1) is its own inverse
    if not np.allclose(leading @ leading, np.eye(n)):
        raise DomainError("leading coefficient must be an involution")

    # 伴随矩阵：上方单位块，末行为 -p_{2m} p_k
    rescaled = [coeffs.p(k).substitute(lam) * (lam ** (order - k)) for k in range(order)]
    degree = max(p.degree for p in rescaled)
    blocks = np.zeros((degree + 1, dim, dim), dtype=complex)
    for r in range(order - 1):
        blocks[0, r * n:(r + 1) * n, (r + 1) * n:(r + 2) * n] = np.eye(n)
    for k, poly in enumerate(rescaled):
        for d in range(poly.degree + 1):
            blocks[d, (order - 1) * n:, k * n:(k + 1) * n] = -leading @ poly.coeffs[d]
    return FirstOrderSystem(m=m, n=n, lam=lam, blocks=blocks)


@dataclass(frozen=True)
class SolutionHandle:
    """
    A solution (or a block of solutions) of a FirstOrderSystem.

    The underlying dense output integrates `columns` initial jets at once; the
    handle represents the combination solution @ weights, a single solution
    when weights is a vector.
    """
    system: FirstOrderSystem
    solution: object  # scipy OdeSolution
    columns: int
    weights: Optional[np.ndarray] = None
    span: tuple = (0.0, 1.0)

    def _raw(self, x) -> np.ndarray:
        dim = self.system.dimension
        values = self.solution(x)
        if np.ndim(x) == 0:
            return values.reshape(dim, self.columns)
        return np.moveaxis(values.reshape(dim, self.columns, -1), 2, 0)

    def jet(self, x) -> np.ndarray:
        """j^{2m}u(x): (2mn,) for a single solution, (2mn, k) for a block; a leading axis for array x."""
        raw = self._raw(x)
        return raw if self.weights is None else raw @ self.weights

    def column(self, k: int) -> "SolutionHandle":
        weights = np.zeros(self.columns, dtype=complex)
        weights[k] = 1.0
        return self.combine(weights)

    def combine(self, weights: np.ndarray) -> "SolutionHandle":
        return SolutionHandle(self.system, self.solution, self.columns,
                              np.asarray(weights, dtype=complex), self.span)

    def residual(self, samples: int = 20, rng: Optional[np.random.Generator] = None) -> float:
        """
        max ||Y'(x) - M(x) Y(x)|| / max ||Y|| at random points, with Y' from a
        five-point stencil on the dense output.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        lo, hi = min(self.span), max(self.span)
        h = RESIDUAL_STEP * (hi - lo)
        xs = rng.uniform(lo + 2 * h, hi - 2 * h, size=samples)
        worst, scale = 0.0, 0.0
        for x in xs:
            y = self.jet(x)
            dy = (self.jet(x - 2 * h) - 8 * self.jet(x - h) + 8 * self.jet(x + h) - self.jet(x + 2 * h)) / (12 * h)
            worst = max(worst, float(np.max(np.abs(dy - self.system.matrix(x) @ y))))
            scale = max(scale, float(np.max(np.abs(y))))
        return worst / max(scale, np.finfo(float).tiny)


def integrate(system: FirstOrderSystem, x0: float, x1: float, initial: np.ndarray,
              tol: TolerancePolicy = TolerancePolicy(), atol: Optional[float] = None) -> SolutionHandle:
    """
    Integrate one or several initial jets from x0 to x1.

    Args:
        system: first-order system
        x0, x1: endpoints in [0, 1]
        initial: (2mn,) jet or (2mn, k) block of jets at x0
        tol: tolerance policy (integ_rel_tol, integ_abs_tol)
        atol: absolute tolerance overriding the policy floor

    Returns:
        SolutionHandle with dense output over [x0, x1]

    Raises:
        IntegrationError: if the solver does not reach x1
    """
    for x in (x0, x1):
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"integration endpoints must lie in [0, 1], got {x}")
    y0 = np.asarray(initial, dtype=complex)
    single = y0.ndim == 1
    block = y0.reshape(system.dimension, -1)
    result = solve_ivp(system.rhs, (x0, x1), block.reshape(-1), method='DOP853', dense_output=True,
                       rtol=tol.integ_rel_tol, atol=tol.integ_abs_tol if atol is None else atol)
    if not result.success:
        logging.error(f"Integration at lambda={system.lam} failed: {result.message}")
        raise IntegrationError(f"ODE solver failed at lambda={system.lam}: {result.message}")
    logging.debug(f"Integrated {block.shape[1]} column(s) at lambda={system.lam} in {result.t.size} steps.")
    handle = SolutionHandle(system, result.sol, block.shape[1], span=(x0, x1))
    return handle.column(0) if single else handle


def dirichlet_initial(m: int, n: int) -> np.ndarray:
    """Initial jets with vanishing m-jet and unit upper jet, one column per direction."""
    mn = m * n
    initial = np.zeros((2 * mn, mn), dtype=complex)
    initial[mn:, :] = np.eye(mn)
    return initial


@dataclass(frozen=True)
class ShootingMatrix:
    """W(lam) = j^m at x=1 of the Dirichlet fundamental block, with its end-jet scale."""
    lam: float
    matrix: np.ndarray
    end_jets: np.ndarray
    singular_values: np.ndarray = field(repr=False)
    solutions: Optional[SolutionHandle] = field(default=None, repr=False)

    @property
    def scale(self) -> float:
        return float(scipy.linalg.svdvals(self.end_jets)[0])

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    @property
    def normalized_sigma_min(self) -> float:
        return self.sigma_min / max(self.scale, np.finfo(float).tiny)

    def kernel_dimension(self, rel_tol: float) -> int:
        return int(np.sum(self.singular_values <= rel_tol * self.scale))


def _shooting_from_jets(lam: float, end_jets: np.ndarray, mn: int,
                        solutions: Optional[SolutionHandle] = None) -> ShootingMatrix:
    matrix = end_jets[:mn, :]
    return ShootingMatrix(lam=lam, matrix=matrix, end_jets=end_jets,
                          singular_values=scipy.linalg.svdvals(matrix), solutions=solutions)


def shooting_matrix(problem: SturmProblem, lam: float,
                    tol: TolerancePolicy = TolerancePolicy(),
                    coeffs: Optional[OperatorCoefficients] = None) -> ShootingMatrix:
    """Integrate the mn Dirichlet columns of l_lam over [0, 1] and read off W(lam)."""
    coeffs = assemble_operator(problem) if coeffs is None else coeffs
    system = to_first_order(coeffs, lam)
    handle = integrate(system, 0.0, 1.0, dirichlet_initial(problem.m, problem.n), tol)
    return _shooting_from_jets(float(lam), handle.jet(1.0), problem.m * problem.n, handle)


class ShootingProfile:
    """
    Shooting matrices of the whole rescaled family from one integration.

    If u solves the original operator then u(lam x) solves l_lam, so the
    rescaled Dirichlet block at x=1 is D(lam) Y(lam) D_up(lam)^{-1} with the
    jet scalings D = diag(lam^r).
    """

    def __init__(self, problem: SturmProblem, tol: TolerancePolicy = TolerancePolicy(),
                 coeffs: Optional[OperatorCoefficients] = None):
        self.problem = problem
        self.m, self.n = problem.m, problem.n
        coeffs = assemble_operator(problem) if coeffs is None else coeffs
        system = to_first_order(coeffs, 1.0)
        # tiny absolute floor keeps the small-lam end of the block accurate
        self.handle = integrate(system, 0.0, 1.0, dirichlet_initial(self.m, self.n), tol, atol=1e-16)
        self.powers = np.repeat(np.arange(2 * self.m), self.n)

    def at(self, lam: float) -> ShootingMatrix:
        lam = float(lam)
        if not 0.0 < lam <= 1.0:
            raise DomainError(f"lambda must lie in (0, 1], got {lam}")
        mn = self.m * self.n
        scaling = lam ** self.powers
        end_jets = scaling[:, None] * self.handle.jet(lam) / scaling[None, mn:]
        return _shooting_from_jets(lam, end_jets, mn)

    def indicator(self, lam: float) -> float:
        return self.at(lam).normalized_sigma_min


def shooting_profile(problem: SturmProblem, tol: TolerancePolicy = TolerancePolicy()) -> ShootingProfile:
    return ShootingProfile(problem, tol)


def kernel_solutions(problem: SturmProblem, lam0: float, tol: TolerancePolicy = TolerancePolicy(),
                     dimension: Optional[int] = None,
                     boundary_tol: Optional[float] = None) -> List[SolutionHandle]:
    """
    Solutions of the Dirichlet problem for l_{lam0} on [0, 1].

    Args:
        problem: validated problem
        lam0: conjugate instant
        tol: tolerance policy; detect_rel_tol decides the kernel
        dimension: kernel dimension known from the scan; overrides the threshold
        boundary_tol: relative boundary jet tolerated before warning; nearly-solving
            directions of a crossing cluster leave a larger one

    Returns:
        one SolutionHandle per right singular vector of W(lam0) in the kernel

    Raises:
        EmptyKernelError: if W(lam0) is numerically invertible
    """
    shoot = shooting_matrix(problem, lam0, tol)
    d = shoot.kernel_dimension(tol.detect_rel_tol) if dimension is None else dimension
    if d == 0:
        raise EmptyKernelError(
            f"lambda={lam0} is not a conjugate instant (normalized sigma_min {shoot.normalized_sigma_min:.3e})")
    # 右奇异向量给出核方向
    _, _, vh = scipy.linalg.svd(shoot.matrix)
    kernel = vh.conj().T[:, -d:]
    handles = [shoot.solutions.combine(kernel[:, k]) for k in range(d)]
    mn = problem.m * problem.n
    limit = max(tol.detect_rel_tol, 1e-6) if boundary_tol is None else boundary_tol
    # 检查 x = 1 处的边界残差
    for handle in handles:
        end = handle.jet(1.0)
        if np.linalg.norm(end[:mn]) > limit * np.linalg.norm(end):
            logging.warning(f"Kernel solution at lambda={lam0} leaves boundary jet {np.linalg.norm(end[:mn]):.3e}")
    return handles

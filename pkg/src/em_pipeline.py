"""
EM-index of a Sturm form.

The solution space of l_lam is mapped to the doubled boundary space by
u -> (j^m u(0), A(0) j^{2m} u(0), j^m u(1), A(1) j^{2m} u(1)); its image
a(lam) is a superlagrangian path and the EM-index counts its crossings with
the Dirichlet plane P0, weighted by crossing-form signatures.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import roots_legendre

from .config_loader import Settings
from .errors import (CrossingFormMismatchError, EndpointDegeneracyError, EpsilonGuardError, GeometryError,
                     NonRegularCrossingError)
from .hermitian import CLUSTER_REL_TOL, Inertia, TolerancePolicy, inertia, regular_crossing
from .ode_engine import SolutionHandle, ShootingProfile, integrate, kernel_solutions, shooting_matrix, to_first_order
from .sturm_form import (BoundaryMap, SturmProblem, assemble_boundary_map, assemble_operator, rescale_derivative,
                         rescaled_problem, sesquilinear_form)
from .superlag import (SuperlagFrame, SuperlagPath, SuperhermitianSpace, coordinate_plane, crossing_form_numeric,
                       doubled_space, is_superlagrangian, scan_minima, standard_space)

H_CONSTANCY_TOL = 1e-8
H_CONSTANCY_FAIL = 1e-6
H_SAMPLES = 9


@dataclass(frozen=True)
class ReferencePlane:
    """P0 = {0} + C^{mn} + {0} + C^{mn} in the doubled boundary space."""
    frame: SuperlagFrame

    @classmethod
    def dirichlet(cls, m: int, n: int) -> "ReferencePlane":
        mn = m * n
        space = boundary_space(m, n)
        slots = list(range(mn, 2 * mn)) + list(range(3 * mn, 4 * mn))
        return cls(coordinate_plane(space, slots))


def boundary_space(m: int, n: int) -> SuperhermitianSpace:
    return doubled_space(standard_space(m * n))


def boundary_vectors(jets0: np.ndarray, jets1: np.ndarray, bmap: BoundaryMap) -> np.ndarray:
    """Stack (j^m u(0), A(0) j^{2m}u(0), j^m u(1), A(1) j^{2m}u(1)) for jet columns."""
    mn = bmap.m * bmap.n
    return np.vstack([jets0[:mn], bmap.evaluate(0.0) @ jets0, jets1[:mn], bmap.evaluate(1.0) @ jets1])


@dataclass(frozen=True)
class SolutionSpacePoint:
    lam: float
    solutions: SolutionHandle = field(repr=False)
    frame: np.ndarray = field(repr=False)
    superlag: SuperlagFrame = field(repr=False)
    boundary: BoundaryMap = field(repr=False)
    isotropy_residual: float = 0.0
    h_drift: float = 0.0


@dataclass
class CrossingRecord:
    """
    A conjugate instant, or a cluster of instants closer than the scan resolves.

    kernel_dim counts the exact Dirichlet solutions at lam; cluster_dim also
    counts the nearly-solving directions, and the crossing form lives on those.
    """
    lam: float
    kernel_dim: int
    cluster_dim: int = 0
    form: Optional[np.ndarray] = field(default=None, repr=False)
    inertia: Optional[Inertia] = None
    geometric_form: Optional[np.ndarray] = field(default=None, repr=False)
    kernel: List[SolutionHandle] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.cluster_dim = max(self.cluster_dim, self.kernel_dim)

    @property
    def regular(self) -> bool:
        return regular_crossing(self.inertia, self.kernel_dim)

    @property
    def signature(self) -> Optional[int]:
        return None if self.inertia is None else self.inertia.signature


@dataclass(frozen=True)
class EpsilonCertificate:
    epsilon: float
    min_indicator: float
    halvings: int


@dataclass
class EMResult:
    index: int
    records: List[CrossingRecord]
    epsilon: float


def h_values(handle: SolutionHandle, bmap: BoundaryMap, xs: np.ndarray) -> np.ndarray:
    """h[u](x) = Im <j^m u(x), A(x) j^{2m} u(x)> per column, shape (len(xs), columns)."""
    mn = bmap.m * bmap.n
    out = []
    for x in xs:
        jets = handle.jet(x)
        jets = jets.reshape(jets.shape[0], -1)
        out.append(np.imag(np.einsum('ik,ik->k', jets[:mn].conj(), bmap.evaluate(x) @ jets)))
    return np.array(out)


def h_constancy_drift(handle: SolutionHandle, bmap: BoundaryMap, samples: int = H_SAMPLES) -> float:
    """Largest relative variation of h[u] along [0, 1] over the columns of a handle."""
    mn = bmap.m * bmap.n
    xs = np.linspace(0.0, 1.0, samples)
    values = h_values(handle, bmap, xs)
    scales = np.zeros(values.shape[1])
    for x in xs:
        jets = handle.jet(x).reshape(2 * mn, -1)
        pair = np.linalg.norm(jets[:mn], axis=0) * np.linalg.norm(bmap.evaluate(x) @ jets, axis=0)
        scales = np.maximum(scales, pair)
    drift = np.max(np.abs(values - values[0]), axis=0) / np.maximum(scales, np.finfo(float).tiny)
    return float(np.max(drift))


def solution_path(problem: SturmProblem, lam: float, tol: TolerancePolicy = TolerancePolicy()) -> SolutionSpacePoint:
    """
    Frame of a(lam) from the 2mn solutions with unit initial jets.

    Raises:
        GeometryError: if the frame is not isotropic or h[u] drifts along x
    """
    m, n = problem.m, problem.n
    dim = 2 * m * n
    # 2mn 个单位初值解
    system = to_first_order(assemble_operator(problem), lam)
    handle = integrate(system, 0.0, 1.0, np.eye(dim, dtype=complex), tol)
    bmap = assemble_boundary_map(rescaled_problem(problem, lam))
    frame = boundary_vectors(handle.jet(0.0), handle.jet(1.0), bmap)
    superlag = SuperlagFrame.from_columns(boundary_space(m, n), frame, tol)

    # 各向同性与 h 守恒检查
    report = is_superlagrangian(superlag)
    if not report.ok:
        logging.error(f"Solution frame at lambda={lam} fails isotropy (residual {report.residual:.3e})")
        raise GeometryError(f"solution frame at lambda={lam} is not isotropic: residual {report.residual:.3e}")
    drift = h_constancy_drift(handle, bmap)
    if drift > H_CONSTANCY_FAIL:
        raise GeometryError(f"h[u] varies along x at lambda={lam}: relative drift {drift:.3e}")
    if drift > H_CONSTANCY_TOL:
        logging.warning(f"h[u] drift {drift:.3e} at lambda={lam} exceeds {H_CONSTANCY_TOL:.0e}")
    return SolutionSpacePoint(lam=float(lam), solutions=handle, frame=frame, superlag=superlag, boundary=bmap,
                              isotropy_residual=report.residual, h_drift=drift)


def solution_superlag_path(problem: SturmProblem, a: float, b: float,
                           tol: TolerancePolicy = TolerancePolicy()) -> SuperlagPath:
    return SuperlagPath(a, b, lambda lam: solution_path(problem, lam, tol).superlag)


def epsilon_guard(problem: SturmProblem, tol: TolerancePolicy = TolerancePolicy(), initial: float = 1.0 / 64,
                  grid_points: int = 128, max_halvings: int = 6) -> EpsilonCertificate:
    """
    Certify that (0, eps] holds no conjugate instant.

    Raises:
        EpsilonGuardError: if no candidate eps passes after max_halvings halvings
    """
    coeffs = assemble_operator(problem)
    epsilon = initial
    for halving in range(max_halvings + 1):
        grid = np.linspace(epsilon / grid_points, epsilon, grid_points)
        lowest = min(shooting_matrix(problem, lam, tol, coeffs).normalized_sigma_min for lam in grid)
        if lowest > tol.detect_rel_tol:
            logging.info(f"Epsilon guard certified eps={epsilon:.6g} (min sigma {lowest:.3e}).")
            return EpsilonCertificate(epsilon, lowest, halving)
        logging.info(f"Epsilon guard rejected eps={epsilon:.6g} (min sigma {lowest:.3e}), halving.")
        epsilon /= 2
    raise EpsilonGuardError(f"no conjugate-free interval (0, eps] found after {max_halvings} halvings")


def conjugate_points(problem: SturmProblem, epsilon: float, tol: TolerancePolicy = TolerancePolicy(),
                     points: int = 512, xtol: float = 1e-12,
                     profile: Optional[ShootingProfile] = None) -> List[CrossingRecord]:
    """
    Conjugate instants in [eps, 1] with their kernel dimensions, ascending.

    Raises:
        EndpointDegeneracyError: if lam = 1 is a conjugate instant
    """
    # 一次积分得到整条打靶族
    profile = ShootingProfile(problem, tol) if profile is None else profile
    end = profile.at(1.0)
    if end.normalized_sigma_min <= tol.detect_rel_tol:
        raise EndpointDegeneracyError("q is degenerate at lambda = 1 (conjugate instant at the endpoint)", lam=1.0)

    records = []
    for lam0 in scan_minima(profile.indicator, epsilon, 1.0, points, xtol, tol.detect_rel_tol):
        # 严格核维数与簇维数
        shoot = profile.at(lam0)
        dimension = max(shoot.kernel_dimension(tol.detect_rel_tol), 1)
        cluster = shoot.kernel_dimension(max(CLUSTER_REL_TOL, tol.detect_rel_tol))
        if cluster > dimension:
            logging.info(f"Conjugate instant {lam0:.12g} groups {cluster} nearly coincident crossing(s).")
        records.append(CrossingRecord(lam=lam0, kernel_dim=dimension, cluster_dim=cluster))
    logging.info(f"Found {len(records)} conjugate instant(s) in [{epsilon:.6g}, 1].")
    return sorted(records, key=lambda record: record.lam)


def crossing_form_analytic(problem: SturmProblem, lam0: float, kernel: List[SolutionHandle],
                           nodes: int = 64) -> np.ndarray:
    """
    Gamma[a][b] = int_0^1 sum_{i,j} <D^i u_a, (d/dlam omega^lam_{i,j})|_{lam0} D^j u_b> dx
    by Gauss-Legendre quadrature along the kernel solutions.
    """
    if not kernel:
        return np.zeros((0, 0), dtype=complex)
    # 映射到 [0, 1] 的 Gauss-Legendre 节点
    t, w = roots_legendre(nodes)
    xs, weights = 0.5 * (t + 1.0), 0.5 * w
    jets = np.stack([handle.jet(xs) for handle in kernel], axis=2)
    form = sesquilinear_form(rescale_derivative(problem, lam0), jets, jets, xs, weights)
    return 0.5 * (form + form.conj().T)


def crossing_form_geometric(problem: SturmProblem, lam0: float, kernel: List[SolutionHandle],
                            step: float = 1e-4, tol: TolerancePolicy = TolerancePolicy(),
                            rng: Optional[np.random.Generator] = None, a: float = 0.0) -> np.ndarray:
    """Crossing form of a(lam) on P0 at lam0, in the basis given by the kernel solutions."""
    m, n = problem.m, problem.n
    bmap = assemble_boundary_map(rescaled_problem(problem, lam0))
    basis = [boundary_vectors(h.jet(0.0)[:, None], h.jet(1.0)[:, None], bmap)[:, 0] for h in kernel]
    path = solution_superlag_path(problem, max(a, 1e-12), 1.0, tol)
    P0 = ReferencePlane.dirichlet(m, n).frame
    return crossing_form_numeric(path, P0, lam0, step=step, basis=basis, rng=rng, tol=tol)


def _check_forms(lam0: float, analytic: np.ndarray, geometric: np.ndarray,
                 tol: TolerancePolicy, entry_tol: float) -> None:
    s_analytic = inertia(analytic, tol).signature
    s_geometric = inertia(geometric, tol).signature
    if s_analytic != s_geometric:
        raise CrossingFormMismatchError(
            f"crossing form signatures differ at lambda={lam0:.12g}: analytic {s_analytic}, geometric {s_geometric}")
    gap = float(np.max(np.abs(analytic - geometric))) if analytic.size else 0.0
    if gap > entry_tol * max(1.0, float(np.max(np.abs(analytic)))):
        logging.warning(f"Crossing forms at lambda={lam0:.12g} differ entrywise by {gap:.3e}")


def em_index_of_form(problem: SturmProblem, settings: Settings = Settings(), epsilon: Optional[float] = None,
                     rng: Optional[np.random.Generator] = None) -> EMResult:
    """
    mu_EM as the sum of crossing-form signatures over the conjugate instants in [eps, 1].

    Args:
        problem: validated problem
        settings: run settings (tolerances, scan, guard, crossing check)
        epsilon: start of the parameter interval; certified by the guard when omitted
        rng: generator for complement draws of the geometric check

    Returns:
        EMResult with the index, the crossing records and the eps used

    Raises:
        EndpointDegeneracyError: if q is degenerate at lambda = 1
        NonRegularCrossingError: if a crossing form is degenerate
        CrossingFormMismatchError: if analytic and geometric forms disagree
    """
    tol = settings.tolerances
    # 未指定 eps 时由 guard 认证
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    if epsilon is None:
        guard = settings.epsilon_guard
        epsilon = epsilon_guard(problem, tol, guard.initial, guard.grid_points, guard.max_halvings).epsilon

    # 扫描共轭点
    records = conjugate_points(problem, epsilon, tol, settings.scan.points, settings.scan.refine_xtol)
    check = settings.crossing_check
    for record in records:
        boundary_tol = CLUSTER_REL_TOL if record.cluster_dim > record.kernel_dim else None
        record.kernel = kernel_solutions(problem, record.lam, tol, dimension=record.cluster_dim,
                                         boundary_tol=boundary_tol)
        # 解析交叉形式，正则时再用几何形式校验
        record.form = crossing_form_analytic(problem, record.lam, record.kernel, check.quadrature_nodes)
        record.inertia = inertia(record.form, tol)
        logging.debug(f"Conjugate instant {record.lam:.12g}: dim {record.kernel_dim} (cluster {record.cluster_dim}), "
                      f"inertia {record.inertia.as_tuple()}")
        if check.enabled and record.regular:
            record.geometric_form = crossing_form_geometric(problem, record.lam, record.kernel,
                                                            check.fd_step_fraction * (1.0 - epsilon), tol, rng,
                                                            a=epsilon)
            _check_forms(record.lam, record.form, record.geometric_form, tol, check.entry_tol)

    # 非正则交叉交给调用方正则化
    irregular = [record.lam for record in records if not record.regular]
    if irregular:
        raise NonRegularCrossingError(irregular)
    index = sum(record.signature for record in records)
    logging.info(f"EM-index {index} from {len(records)} conjugate instant(s).")
    return EMResult(index=index, records=records, epsilon=epsilon)

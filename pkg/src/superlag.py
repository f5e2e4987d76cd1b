"""
Superhermitian linear geometry.

A superhermitian space carries a nondegenerate Hermitian form h of zero
signature; superlagrangians are the half-dimensional subspaces on which h
vanishes. Subspaces are handled through orthonormal frames. Crossing forms
of paths use the convention Q(v) = Re <v, 2i H v'> for any curve v(t) in
p(t) through v.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import AdmissibilityError, ChartDomainError, FrameError, GeometryError, NonRegularCrossingError
from .hermitian import Inertia, TolerancePolicy, inertia, restrict_form

ISOTROPY_TOL = 1e-8
COMPLEMENT_RETRIES = 20
# chart values of a superlagrangian are Hermitian; asymmetry measures its isotropy defect
CHART_HERMITIAN_TOL = 1e-8
CHART_HERMITIAN_FAIL = 1e-5


@dataclass(frozen=True)
class SuperhermitianSpace:
    structure: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.structure, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % 2:
            raise GeometryError(f"structure matrix must be square of even size, got {H.shape}")
        counts = inertia(H)
        half = H.shape[0] // 2
        if counts.as_tuple() != (half, half, 0):
            raise GeometryError(f"structure matrix must have inertia ({half}, {half}, 0), got {counts.as_tuple()}")
        object.__setattr__(self, 'structure', H)

    @property
    def dim(self) -> int:
        return self.structure.shape[0]

    @property
    def half_dim(self) -> int:
        return self.dim // 2

    def h(self, zeta) -> float:
        zeta = np.asarray(zeta, dtype=complex)
        return float(np.real(np.vdot(zeta, self.structure @ zeta)))

    def pairing(self, u, v) -> complex:
        return complex(np.vdot(u, self.structure @ v))


def standard_space(N: int) -> SuperhermitianSpace:
    """C^N + C^N with h[(xi, eta)] = Im <xi, eta>."""
    if N < 1:
        raise GeometryError(f"N must be >= 1, got {N}")
    eye, zero = np.eye(N), np.zeros((N, N))
    return SuperhermitianSpace(np.block([[zero, eye], [-eye, zero]]) / 2j)


def doubled_space(base: SuperhermitianSpace) -> SuperhermitianSpace:
    """S + S with the form -h + h."""
    return SuperhermitianSpace(scipy.linalg.block_diag(-base.structure, base.structure))


@dataclass(frozen=True)
class SuperlagFrame:
    """Orthonormal frame (2N x N) of a half-dimensional subspace."""
    space: SuperhermitianSpace
    frame: np.ndarray

    @classmethod
    def from_columns(cls, space: SuperhermitianSpace, columns,
                     tol: TolerancePolicy = TolerancePolicy()) -> "SuperlagFrame":
        columns = np.atleast_2d(np.asarray(columns, dtype=complex))
        if columns.shape != (space.dim, space.half_dim):
            raise FrameError(f"frame must have shape {(space.dim, space.half_dim)}, got {columns.shape}")
        s = scipy.linalg.svdvals(columns)
        if s[-1] <= tol.rank_rel_tol * s[0]:
            raise FrameError(f"frame is rank deficient (singular values {s[0]:.3e} .. {s[-1]:.3e})")
        q, _ = scipy.linalg.qr(columns, mode='economic')
        return cls(space, q)

    @property
    def dim(self) -> int:
        return self.frame.shape[1]


@dataclass(frozen=True)
class IsotropyReport:
    residual: float
    ok: bool


def is_superlagrangian(frame: SuperlagFrame, tol: float = ISOTROPY_TOL) -> IsotropyReport:
    """max |F* H F| against tol * ||H|| * ||F||^2."""
    F = frame.frame
    H = frame.space.structure
    if F.shape[1] != frame.space.half_dim:
        raise FrameError(f"frame has {F.shape[1]} columns, expected {frame.space.half_dim}")
    residual = float(np.max(np.abs(F.conj().T @ H @ F)))
    bound = tol * np.linalg.norm(H, 2) * np.linalg.norm(F, 2) ** 2
    return IsotropyReport(residual=residual, ok=residual <= bound)


def graph_frame(space: SuperhermitianSpace, T) -> SuperlagFrame:
    """Columns (e_k, T e_k) in a standard space."""
    T = np.atleast_2d(np.asarray(T, dtype=complex))
    return SuperlagFrame.from_columns(space, np.vstack([np.eye(T.shape[0]), T]))


def coordinate_plane(space: SuperhermitianSpace, slots: Sequence[int]) -> SuperlagFrame:
    """Frame spanned by the listed coordinate axes."""
    columns = np.zeros((space.dim, len(slots)), dtype=complex)
    for k, slot in enumerate(slots):
        columns[slot, k] = 1.0
    return SuperlagFrame.from_columns(space, columns)


def intersection(P: SuperlagFrame, P0: SuperlagFrame,
                 tol: TolerancePolicy = TolerancePolicy()) -> Tuple[int, List[np.ndarray]]:
    """
    Dimension and orthonormal basis of P cap P0.

    Null vectors (a, b) of [F, -F0] give the common vectors F a = F0 b.
    """
    stacked = np.hstack([P.frame, -P0.frame])
    _, s, vh = scipy.linalg.svd(stacked)
    N = P.frame.shape[1]
    # stacked is 2N x 2N; its null space lives in the trailing right singular vectors
    null = [vh[k].conj() for k in range(len(s)) if s[k] <= tol.rank_rel_tol * max(s[0], 1.0)]
    if not null:
        return 0, []
    vectors = np.column_stack([P.frame @ v[:N] for v in null])
    basis = scipy.linalg.orth(vectors)
    return basis.shape[1], [basis[:, k] for k in range(basis.shape[1])]


def principal_angles(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Principal angles (radians) between the column spans of U and V."""
    Uo = scipy.linalg.orth(np.atleast_2d(U))
    Vo = scipy.linalg.orth(np.atleast_2d(V))
    s = scipy.linalg.svdvals(Uo.conj().T @ Vo)
    return np.arccos(np.clip(s, 0.0, 1.0))


def _decompose(P: SuperlagFrame, P0: SuperlagFrame, P1: SuperlagFrame) -> Tuple[np.ndarray, np.ndarray]:
    basis = np.hstack([P0.frame, P1.frame])
    coords = scipy.linalg.solve(basis, P.frame)
    N = P0.dim
    return coords[:N], coords[N:]


def chart(P: SuperlagFrame, P0: SuperlagFrame, P1: SuperlagFrame,
          tol: TolerancePolicy = TolerancePolicy()) -> np.ndarray:
    """
    Hermitian matrix of P in the chart over P0 with complement P1.

    P = span(Z0 A + Z1 B) = graph(X), X = B A^{-1}; the chart value is
    Z0* (2i H) Z1 X, which is the identity pairing on P0.

    Raises:
        ChartDomainError: if P is not transverse to P1
        GeometryError: if the chart value is far from Hermitian (P not superlagrangian)
    """
    # 在 P0 + P1 中分解 P 的框架
    A, B = _decompose(P, P0, P1)
    s = scipy.linalg.svdvals(A)
    if s[-1] <= tol.rank_rel_tol * max(s[0], 1.0):
        raise ChartDomainError(f"subspace is not transverse to the complement (sigma_min {s[-1]:.3e})")
    X = scipy.linalg.solve(A.T, B.T).T
    M = P0.frame.conj().T @ (2j * P0.space.structure) @ P1.frame @ X
    # 非超拉格朗日子空间的图不是 Hermite 的
    asym = float(np.max(np.abs(M - M.conj().T)))
    scale = max(1.0, float(np.max(np.abs(M))))
    if asym > CHART_HERMITIAN_FAIL * scale:
        raise GeometryError(f"chart value is not Hermitian: max |M - M*| = {asym:.3e} (scale {scale:.3e})")
    if asym > CHART_HERMITIAN_TOL * scale:
        logging.warning(f"Chart value asymmetry {asym:.3e} exceeds {CHART_HERMITIAN_TOL:.0e}")
    return 0.5 * (M + M.conj().T)


def dual_complement(P0: SuperlagFrame) -> SuperlagFrame:
    """
    A superlagrangian complement of P0.

    Starting from the orthogonal complement C, K = C* H Z0 is invertible and
    D = C - 1/2 Z0 K^{-1} C* H C is isotropic and transverse to P0.
    """
    Z0 = P0.frame
    H = P0.space.structure
    full, _ = scipy.linalg.qr(Z0, mode='full')
    C = full[:, Z0.shape[1]:]
    K = C.conj().T @ H @ Z0
    Y = -0.5 * scipy.linalg.solve(K, C.conj().T @ H @ C)
    return SuperlagFrame.from_columns(P0.space, C + Z0 @ Y)


def random_complement(P0: SuperlagFrame, rng: np.random.Generator, scale: float = 1.0) -> SuperlagFrame:
    """
    Random superlagrangian complement D + Z0 S of P0.

    Isotropy needs K S skew-Hermitian with K = D* H Z0, so S = K^{-1} (i R)
    for a random Hermitian R.
    """
    D = dual_complement(P0).frame
    N = P0.dim
    R = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    R = scale * 0.5 * (R + R.conj().T)
    K = D.conj().T @ P0.space.structure @ P0.frame
    S = scipy.linalg.solve(K, 1j * R)
    return SuperlagFrame.from_columns(P0.space, D + P0.frame @ S)


def complement_for(P: SuperlagFrame, P0: SuperlagFrame, rng: np.random.Generator,
                   tol: TolerancePolicy = TolerancePolicy()) -> SuperlagFrame:
    """A complement of P0 transverse to P, found by randomized retries."""
    for attempt in range(COMPLEMENT_RETRIES):
        P1 = random_complement(P0, rng)
        angles = principal_angles(P.frame, P1.frame)
        if np.min(angles) > 1e-3:
            return P1
        logging.debug(f"Complement draw {attempt} not transverse (min angle {np.min(angles):.2e}).")
    raise GeometryError(f"no complement transverse to the path found after {COMPLEMENT_RETRIES} draws")


@dataclass(frozen=True)
class SuperlagPath:
    """Parameter interval [a, b] and the evaluator t -> SuperlagFrame."""
    a: float
    b: float
    evaluate: Callable[[float], SuperlagFrame]
    derivative: Optional[Callable[[float], np.ndarray]] = None

    def __call__(self, t: float) -> SuperlagFrame:
        return self.evaluate(t)

    @property
    def length(self) -> float:
        return self.b - self.a


def _chart_derivative(path: SuperlagPath, P0: SuperlagFrame, P1: SuperlagFrame,
                      t0: float, step: float) -> np.ndarray:
    M = lambda t: chart(path(t), P0, P1)  # noqa: E731
    if t0 + step > path.b:
        return (3 * M(t0) - 4 * M(t0 - step) + M(t0 - 2 * step)) / (2 * step)
    if t0 - step < path.a:
        return (-3 * M(t0) + 4 * M(t0 + step) - M(t0 + 2 * step)) / (2 * step)
    return (M(t0 + step) - M(t0 - step)) / (2 * step)


def crossing_form_numeric(path: SuperlagPath, P0: SuperlagFrame, t0: float, step: Optional[float] = None,
                          basis: Optional[Sequence[np.ndarray]] = None, rng: Optional[np.random.Generator] = None,
                          tol: TolerancePolicy = TolerancePolicy()) -> np.ndarray:
    """
    Crossing form of a path at t0 by central differences of a chart.

    Args:
        path: superlagrangian path
        P0: reference plane
        t0: crossing parameter (interior)
        step: difference step, default 1e-4 of the interval length
        basis: vectors spanning p(t0) cap P0; computed when omitted
        rng: generator for the complement draw
        tol: tolerance policy

    Returns:
        Hermitian matrix of the form on the basis
    """
    step = 1e-4 * path.length if step is None else step
    rng = np.random.default_rng(0) if rng is None else rng
    P = path(t0)
    if basis is None:
        _, basis = intersection(P, P0, tol)
    if len(basis) == 0:
        return np.zeros((0, 0), dtype=complex)
    P1 = complement_for(P, P0, rng, tol)
    coords = [scipy.linalg.lstsq(P0.frame, np.asarray(v, dtype=complex))[0] for v in basis]

    derivative = _chart_derivative(path, P0, P1, t0, step)
    form = restrict_form(derivative, coords, tol)
    half = restrict_form(_chart_derivative(path, P0, P1, t0, step / 2), coords, tol)
    gap = float(np.max(np.abs(form - half)))
    if gap > 1e-4 * max(1.0, float(np.max(np.abs(form)))):
        logging.warning(f"Crossing form at t={t0:.12g} changes by {gap:.3e} when the step is halved")
    return form


@dataclass(frozen=True)
class PathCrossing:
    t: float
    dimension: int
    form: np.ndarray
    inertia: Inertia

    @property
    def regular(self) -> bool:
        return self.inertia.nondegenerate

    @property
    def signature(self) -> int:
        return self.inertia.signature


def intersection_indicator(P: SuperlagFrame, P0: SuperlagFrame) -> float:
    """Smallest singular value of [F, -F0]; zero exactly on the singular variety of P0."""
    return float(scipy.linalg.svdvals(np.hstack([P.frame, -P0.frame]))[-1])


def scan_minima(indicator: Callable[[float], float], a: float, b: float, points: int, xtol: float,
                threshold: float) -> List[float]:
    """
    Refined local minima of a scalar indicator on [a, b] that fall below threshold.

    The grid ends are candidates too: a zero inside the first or last cell
    leaves its smallest grid value on the end point, and is bracketed by
    that cell alone.
    """
    # 先在网格上取值，再对局部极小做有界精化
    grid = np.linspace(a, b, points)
    values = np.array([indicator(t) for t in grid])
    last = points - 1
    found: List[float] = []
    for k in range(points):
        left = values[k - 1] if k > 0 else np.inf
        right = values[k + 1] if k < last else np.inf
        if not (values[k] <= left and values[k] < right):
            continue
        result = minimize_scalar(indicator, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, last)]),
                                 method='bounded', options={'xatol': xtol})
        if result.fun > threshold:
            continue
        t0 = float(result.x)
        # 相邻单元可能精化到同一点
        if all(abs(t0 - t) > 10 * xtol for t in found):
            found.append(t0)
    return sorted(found)


def em_index(path: SuperlagPath, P0: SuperlagFrame, tol: TolerancePolicy = TolerancePolicy(),
             points: int = 512, xtol: float = 1e-12,
             rng: Optional[np.random.Generator] = None) -> Tuple[int, List[PathCrossing]]:
    """
    EM-index of a path relative to P0 as the sum of crossing-form signatures.

    Raises:
        AdmissibilityError: if an endpoint meets the singular variety of P0
        NonRegularCrossingError: if a crossing form is degenerate
    """
    # 端点必须与 P0 横截
    threshold = tol.detect_rel_tol
    for t in (path.a, path.b):
        if intersection_indicator(path(t), P0) <= threshold:
            raise AdmissibilityError(f"path endpoint t={t} meets the singular variety of the reference plane")

    crossings: List[PathCrossing] = []
    for t0 in scan_minima(lambda t: intersection_indicator(path(t), P0), path.a, path.b, points, xtol, threshold):
        dimension, basis = intersection(path(t0), P0, tol.for_detection())
        form = crossing_form_numeric(path, P0, t0, basis=basis, rng=rng, tol=tol)
        crossings.append(PathCrossing(t0, dimension, form, inertia(form, tol)))

    irregular = [c.t for c in crossings if not c.regular]
    if irregular:
        raise NonRegularCrossingError(irregular)
    index = sum(c.signature for c in crossings)
    logging.debug(f"EM-index {index} from {len(crossings)} crossing(s).")
    return index, crossings

"""
Finite-dimensional Hermitian linear algebra.

Inertia, numerical kernels and restriction of sesquilinear forms, all under
one explicit tolerance policy. Inner products are antilinear in the first
argument and linear in the second throughout the package.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import DegenerateBasisError, SymmetryViolationError

SYMMETRY_TOL = 1e-12
# near-kernel directions below this relative size are grouped with a crossing
CLUSTER_REL_TOL = 1e-4

# A Hermitian matrix is carried as a square complex ndarray; as_herm validates it.
HermMatrix = np.ndarray
SesquilinearForm = Union[Callable[[np.ndarray, np.ndarray], complex], np.ndarray]


class TolerancePolicy(BaseModel):
    """Thresholds shared by every numerical decision of a run."""
    model_config = ConfigDict(frozen=True)

    rank_rel_tol: float = Field(1e-8, description="Relative threshold for zero eigen/singular values")
    integ_rel_tol: float = Field(1e-10, description="Relative tolerance of ODE integration and quadrature")
    integ_abs_tol: float = Field(1e-13, description="Absolute floor of the ODE error control")
    detect_rel_tol: float = Field(1e-7, description="Threshold accepting a refined minimum as a crossing")

    @field_validator('rank_rel_tol', 'integ_rel_tol', 'integ_abs_tol', 'detect_rel_tol')
    @classmethod
    def _in_unit_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"tolerance must lie in (0, 1), got {value}")
        return value

    def for_detection(self) -> "TolerancePolicy":
        """Policy whose rank threshold is the crossing-detection threshold."""
        return self.model_copy(update={'rank_rel_tol': self.detect_rel_tol})

    def for_clusters(self) -> "TolerancePolicy":
        """Policy whose rank threshold groups nearly coincident crossings."""
        return self.model_copy(update={'rank_rel_tol': max(CLUSTER_REL_TOL, self.detect_rel_tol)})


@dataclass(frozen=True)
class Inertia:
    n_plus: int
    n_minus: int
    n_zero: int

    @property
    def dim(self) -> int:
        return self.n_plus + self.n_minus + self.n_zero

    @property
    def signature(self) -> int:
        return self.n_plus - self.n_minus

    @property
    def nondegenerate(self) -> bool:
        return self.n_zero == 0

    def as_tuple(self):
        return (self.n_plus, self.n_minus, self.n_zero)


def regular_crossing(form_inertia: Optional[Inertia], kernel_dim: int) -> bool:
    """
    Regularity of a crossing of a parametrized form.

    The crossing form must be nondegenerate, and an exact crossing of
    dimension > 1 must not cancel to signature 0; such a cluster is only
    resolved by perturbing the family.
    """
    if form_inertia is None or not form_inertia.nondegenerate:
        return False
    return kernel_dim <= 1 or form_inertia.signature != 0


def as_herm(matrix, symmetry_tol: float = SYMMETRY_TOL) -> HermMatrix:
    """
    Validate and return a complex Hermitian matrix.

    Args:
        matrix: square array-like
        symmetry_tol: allowed asymmetry relative to the largest entry

    Returns:
        complex ndarray, symmetrized to remove rounding asymmetry

    Raises:
        SymmetryViolationError: if the input is not square or not Hermitian
    """
    H = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SymmetryViolationError(f"expected a square matrix, got shape {H.shape}")
    if H.size == 0:
        return H
    scale = max(float(np.max(np.abs(H))), np.finfo(float).tiny)
    asym = float(np.max(np.abs(H - H.conj().T)))
    if asym > symmetry_tol * scale:
        raise SymmetryViolationError(
            f"matrix violates Hermitian symmetry: max |H - H*| = {asym:.3e} (scale {scale:.3e})")
    return 0.5 * (H + H.conj().T)


def _zero_threshold(eigenvalues: np.ndarray, tol) -> float:
    radius = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    return tol.rank_rel_tol * max(1.0, radius)


def inertia(H, tol: TolerancePolicy = TolerancePolicy()) -> Inertia:
    """Count positive, negative and numerically zero eigenvalues of H."""
    H = as_herm(H)
    if H.shape[0] == 0:
        return Inertia(0, 0, 0)
    eigenvalues = scipy.linalg.eigvalsh(H)
    threshold = _zero_threshold(eigenvalues, tol)
    # 零阈值相对于谱半径
    n_zero = int(np.sum(np.abs(eigenvalues) < threshold))
    n_plus = int(np.sum(eigenvalues >= threshold))
    return Inertia(n_plus, H.shape[0] - n_plus - n_zero, n_zero)


def kernel_basis(H, tol: TolerancePolicy = TolerancePolicy()) -> List[np.ndarray]:
    """Orthonormal eigenvectors spanning the numerical kernel of H."""
    H = as_herm(H)
    if H.shape[0] == 0:
        return []
    eigenvalues, vectors = scipy.linalg.eigh(H)
    threshold = _zero_threshold(eigenvalues, tol)
    return [vectors[:, k] for k in np.flatnonzero(np.abs(eigenvalues) < threshold)]


def min_abs_eigenvalue(H) -> float:
    """Smallest eigenvalue magnitude (the singular value minimum for Hermitian H)."""
    eigenvalues = scipy.linalg.eigvalsh(as_herm(H))
    return float(np.min(np.abs(eigenvalues))) if eigenvalues.size else np.inf


def restrict_form(B: SesquilinearForm, basis: Sequence[np.ndarray],
                  tol: TolerancePolicy = TolerancePolicy()) -> HermMatrix:
    """
    Matrix of a Hermitian sesquilinear form restricted to span(basis).

    Args:
        B: either a callable B(u, v) or a matrix acting as B(u, v) = <u, B v>
        basis: linearly independent vectors
        tol: tolerance policy for the independence check

    Returns:
        Hermitian matrix with entries B(basis[j], basis[k])
    """
    if len(basis) == 0:
        return np.zeros((0, 0), dtype=complex)
    V = np.column_stack([np.asarray(v, dtype=complex) for v in basis])
    # Gram 矩阵检查基的线性无关性
    gram = V.conj().T @ V
    gram_eigs = scipy.linalg.eigvalsh(gram)
    if gram_eigs[0] < tol.rank_rel_tol * max(gram_eigs[-1], np.finfo(float).tiny):
        raise DegenerateBasisError(
            f"basis is numerically dependent (Gram eigenvalues {gram_eigs[0]:.3e} .. {gram_eigs[-1]:.3e})")

    if callable(B):
        k = V.shape[1]
        out = np.empty((k, k), dtype=complex)
        for j in range(k):
            for l in range(k):
                out[j, l] = B(V[:, j], V[:, l])
    else:
        out = V.conj().T @ np.asarray(B, dtype=complex) @ V

    asym = float(np.max(np.abs(out - out.conj().T))) if out.size else 0.0
    scale = float(np.max(np.abs(out))) if out.size else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        logging.warning(f"restricted form is not Hermitian to 1e-8 (asymmetry {asym:.3e}); symmetrizing")
    return 0.5 * (out + out.conj().T)

"""
Derivative-dependent Hermitian forms.

This module represents the form

    Omega(x)[u] = sum_{i,j=0}^{m} <D^i u(x), omega_{i,j}(x) D^j u(x)>

with matrix-polynomial coefficients, assembles the differential operator
l(x, D) and the boundary map A(x) produced by integrating q(v, u) by parts,
and builds the rescaled family Omega_lambda together with its exact
lambda-derivative.
"""

from dataclasses import dataclass
from math import comb
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DomainError, ProblemValidationError

Index = Tuple[int, int]


class MatrixPolynomial:
    """
    Polynomial in x with matrix coefficients, sum_d coeffs[d] x^d.

    Coefficients are stored densely as a complex array of shape
    (degree + 1, rows, cols). Differentiation, the substitution x -> lam*x
    and multiplication by x are exact.
    """

    def __init__(self, coeffs):
        arr = np.asarray(coeffs, dtype=complex)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] == 0:
            raise ValueError(f"coefficient array must have shape (deg+1, r, c), got {arr.shape}")
        # trailing zero powers carry no information
        last = arr.shape[0]
        while last > 1 and not np.any(arr[last - 1]):
            last -= 1
        self.coeffs = arr[:last].copy()
        self.coeffs.setflags(write=False)

    # --- constructors ---

    @classmethod
    def constant(cls, matrix) -> "MatrixPolynomial":
        return cls(np.atleast_2d(np.asarray(matrix, dtype=complex)))

    @classmethod
    def zeros(cls, rows: int, cols: Optional[int] = None) -> "MatrixPolynomial":
        return cls(np.zeros((1, rows, rows if cols is None else cols), dtype=complex))

    @classmethod
    def identity(cls, n: int) -> "MatrixPolynomial":
        return cls.constant(np.eye(n))

    @classmethod
    def from_terms(cls, terms: Iterable[Tuple[int, np.ndarray]], rows: int,
                   cols: Optional[int] = None) -> "MatrixPolynomial":
        cols = rows if cols is None else cols
        terms = list(terms)
        degree = max((power for power, _ in terms), default=0)
        coeffs = np.zeros((degree + 1, rows, cols), dtype=complex)
        for power, matrix in terms:
            if power < 0:
                raise ValueError(f"negative power {power}")
            coeffs[power] += np.asarray(matrix, dtype=complex).reshape(rows, cols)
        return cls(coeffs)

    # --- structure ---

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coeffs.shape[1], self.coeffs.shape[2]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def dim(self) -> int:
        rows, cols = self.shape
        if rows != cols:
            raise ValueError(f"polynomial is not square: {self.shape}")
        return rows

    def terms(self) -> List[Tuple[int, np.ndarray]]:
        return [(d, self.coeffs[d]) for d in range(self.coeffs.shape[0]) if np.any(self.coeffs[d])]

    def is_constant(self) -> bool:
        return self.degree == 0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(float(np.max(np.abs(self.coeffs))), 1.0)
        return bool(np.all(np.abs(self.coeffs - np.conj(np.swapaxes(self.coeffs, 1, 2))) <= tol * scale))

    # --- evaluation ---

    def __call__(self, x):
        """Evaluate at a scalar (-> (r, c)) or an array of points (-> (k, r, c))."""
        x_arr = np.asarray(x)
        if x_arr.ndim == 0:
            return npoly.polyval(x_arr[()], self.coeffs)
        # polyval puts the point axis last
        return np.moveaxis(npoly.polyval(x_arr.reshape(-1), self.coeffs), -1, 0)

    # --- exact algebra ---

    def derivative(self, order: int = 1) -> "MatrixPolynomial":
        if order >= self.coeffs.shape[0]:
            return MatrixPolynomial.zeros(*self.shape)
        return MatrixPolynomial(npoly.polyder(self.coeffs, m=order, axis=0))

    def substitute(self, lam: float) -> "MatrixPolynomial":
        """The polynomial x -> P(lam * x)."""
        scales = np.power(float(lam), np.arange(self.coeffs.shape[0])).reshape(-1, 1, 1)
        return MatrixPolynomial(self.coeffs * scales)

    def times_x(self) -> "MatrixPolynomial":
        zero = np.zeros((1,) + self.shape, dtype=complex)
        return MatrixPolynomial(np.concatenate([zero, self.coeffs]))

    def left_multiply(self, matrix) -> "MatrixPolynomial":
        return MatrixPolynomial(np.einsum('ij,djk->dik', np.asarray(matrix, dtype=complex), self.coeffs))

    def conj_transpose(self) -> "MatrixPolynomial":
        return MatrixPolynomial(np.conj(np.swapaxes(self.coeffs, 1, 2)))

    def _padded(self, degree: int) -> np.ndarray:
        out = np.zeros((degree + 1,) + self.shape, dtype=complex)
        out[:self.coeffs.shape[0]] = self.coeffs
        return out

    def __add__(self, other: "MatrixPolynomial") -> "MatrixPolynomial":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        degree = max(self.degree, other.degree)
        return MatrixPolynomial(self._padded(degree) + other._padded(degree))

    def __neg__(self) -> "MatrixPolynomial":
        return MatrixPolynomial(-self.coeffs)

    def __sub__(self, other: "MatrixPolynomial") -> "MatrixPolynomial":
        return self + (-other)

    def __mul__(self, scalar) -> "MatrixPolynomial":
        return MatrixPolynomial(self.coeffs * complex(scalar))

    __rmul__ = __mul__

    def allclose(self, other: "MatrixPolynomial", atol: float = 0.0, rtol: float = 0.0) -> bool:
        if self.shape != other.shape:
            return False
        degree = max(self.degree, other.degree)
        return bool(np.allclose(self._padded(degree), other._padded(degree), atol=atol, rtol=rtol))

    def __repr__(self) -> str:
        return f"MatrixPolynomial(shape={self.shape}, degree={self.degree})"


def symmetry_matrix(n: int, nu: int) -> np.ndarray:
    """p_{2m} = diag(I_{n-nu}, -I_nu)."""
    return np.diag(np.concatenate([np.ones(n - nu), -np.ones(nu)])).astype(complex)


@dataclass(frozen=True)
class CoefficientTable:
    """An (m+1) x (m+1) table of matrix polynomials omega_{i,j}(x)."""
    m: int
    n: int
    entries: Dict[Index, MatrixPolynomial]

    def __getitem__(self, key: Index) -> MatrixPolynomial:
        return self.entries.get(key) or MatrixPolynomial.zeros(self.n)

    def evaluate(self, x) -> Dict[Index, np.ndarray]:
        return {key: poly(x) for key, poly in self.entries.items()}

    @property
    def max_degree(self) -> int:
        return max((poly.degree for poly in self.entries.values()), default=0)


@dataclass(frozen=True)
class SturmProblem:
    """
    The form Omega: half-order m, system dimension n, signature index nu and
    the coefficient table omega (all (i, j) pairs present).
    """
    m: int
    n: int
    nu: int
    omega: Dict[Index, MatrixPolynomial]

    @classmethod
    def from_upper(cls, m: int, n: int, nu: int,
                   entries: Dict[Index, Union[MatrixPolynomial, np.ndarray]]) -> "SturmProblem":
        """Build a problem from i <= j entries; mirrors are implied, omitted pairs are zero."""
        table: Dict[Index, MatrixPolynomial] = {}
        for (i, j), value in entries.items():
            poly = value if isinstance(value, MatrixPolynomial) else MatrixPolynomial.constant(value)
            table[(i, j)] = poly
            table[(j, i)] = poly
        for i in range(m + 1):
            for j in range(m + 1):
                table.setdefault((i, j), MatrixPolynomial.zeros(n))
        return cls(m=m, n=n, nu=nu, omega=table)

    @property
    def symmetry(self) -> np.ndarray:
        return symmetry_matrix(self.n, self.nu)

    @property
    def table(self) -> CoefficientTable:
        return CoefficientTable(self.m, self.n, self.omega)

    @property
    def max_degree(self) -> int:
        return self.table.max_degree

    @property
    def is_classical(self) -> bool:
        return self.m == 1 and self.n == 1 and self.nu == 0

    def with_omega(self, omega: Dict[Index, MatrixPolynomial]) -> "SturmProblem":
        return SturmProblem(m=self.m, n=self.n, nu=self.nu, omega=dict(omega))


@dataclass(frozen=True)
class OperatorCoefficients:
    """
    l(x, D) = sum_k coeffs[k](x) D^k with coeffs[2m] = leading_sign * p_{2m}.
    """
    m: int
    n: int
    coeffs: List[MatrixPolynomial]
    leading_sign: int
    symmetry: np.ndarray

    @property
    def leading(self) -> np.ndarray:
        return self.coeffs[2 * self.m](0.0)

    def p(self, k: int) -> MatrixPolynomial:
        return self.coeffs[k]


@dataclass(frozen=True)
class BoundaryMap:
    """
    A(x) with blocks a_{j,k}(x), 0 <= j < m (m-jet rows), 0 <= k < 2m
    (2m-jet columns), so that phi(v, u) = [<j^m v, A j^{2m} u>]_0^1.
    """
    m: int
    n: int
    blocks: Dict[Index, MatrixPolynomial]

    def block(self, j: int, k: int) -> MatrixPolynomial:
        return self.blocks.get((j, k)) or MatrixPolynomial.zeros(self.n)

    def evaluate(self, x: float) -> np.ndarray:
        m, n = self.m, self.n
        out = np.zeros((m * n, 2 * m * n), dtype=complex)
        for (j, k), poly in self.blocks.items():
            out[j * n:(j + 1) * n, k * n:(k + 1) * n] = poly(x)
        return out

    def pairing(self, x: float, v_jet: np.ndarray, u_jet: np.ndarray) -> complex:
        """<j^m v(x), A(x) j^{2m} u(x)> for flat jets."""
        mn = self.m * self.n
        return complex(np.vdot(np.asarray(v_jet)[:mn], self.evaluate(x) @ np.asarray(u_jet)[:2 * mn]))

    def antidiagonal_ok(self, symmetry: np.ndarray) -> bool:
        m = self.m
        for j in range(m):
            value = self.block(j, 2 * m - j - 1)
            if not value.is_constant():
                return False
            coeff = value.coeffs[0]
            if not (np.array_equal(coeff, symmetry) or np.array_equal(coeff, -symmetry)):
                return False
        return all(poly.is_zero() for (j, k), poly in self.blocks.items() if j + k >= 2 * m)


@dataclass(frozen=True)
class Jet:
    """The stacked derivatives (u(x), u'(x), ..., u^{(r-1)}(x)), each in C^n."""
    values: np.ndarray
    n: int

    @property
    def order(self) -> int:
        return len(self.values) // self.n

    def block(self, r: int) -> np.ndarray:
        return self.values[r * self.n:(r + 1) * self.n]

    def truncated(self, order: int) -> "Jet":
        return Jet(self.values[:order * self.n], self.n)


def validate(problem: SturmProblem, tol: float = 1e-12) -> SturmProblem:
    """
    Check every SturmProblem invariant and return the problem unchanged.

    Raises:
        ProblemValidationError: listing one diagnostic per violation
    """
    diagnostics: List[str] = []
    m, n, nu = problem.m, problem.n, problem.nu
    if m < 1:
        diagnostics.append(f"half-order m must be >= 1, got {m}")
    if n < 1:
        diagnostics.append(f"system dimension n must be >= 1, got {n}")
    if not 0 <= nu <= max(n, 0):
        diagnostics.append(f"signature index nu must satisfy 0 <= nu <= n, got nu={nu}, n={n}")
    if diagnostics:
        raise ProblemValidationError(diagnostics)

    for i in range(m + 1):
        for j in range(m + 1):
            poly = problem.omega.get((i, j))
            if poly is None:
                diagnostics.append(f"omega[{i}][{j}] missing")
                continue
            if poly.shape != (n, n):
                diagnostics.append(f"omega[{i}][{j}] has shape {poly.shape}, expected ({n}, {n})")
                continue
            if not np.all(np.isfinite(poly.coeffs)):
                diagnostics.append(f"omega[{i}][{j}] contains non-finite entries")
                continue
            for power, coeff in poly.terms():
                asym = np.abs(coeff - coeff.conj().T)
                if np.max(asym) > tol * max(1.0, float(np.max(np.abs(coeff)))):
                    r, c = np.unravel_index(int(np.argmax(asym)), asym.shape)
                    diagnostics.append(
                        f"omega[{i}][{j}] term x^{power} entry ({r},{c}) = {coeff[r, c]} is not Hermitian")
    if diagnostics:
        raise ProblemValidationError(diagnostics)

    # omega_{i,j} 与 omega_{j,i} 必须一致
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            a, b = problem.omega[(i, j)], problem.omega[(j, i)]
            degree = max(a.degree, b.degree)
            diff = np.abs(a._padded(degree) - b._padded(degree))
            if np.max(diff) > tol * max(1.0, float(np.max(np.abs(a.coeffs)))):
                d, r, c = np.unravel_index(int(np.argmax(diff)), diff.shape)
                diagnostics.append(
                    f"index-symmetry violation: omega[{i}][{j}] != omega[{j}][{i}] at term x^{d} entry ({r},{c})")

    # 最高阶系数必须是常数 p_{2m}
    leading = problem.omega[(m, m)]
    expected = problem.symmetry
    if not leading.is_constant():
        diagnostics.append(f"leading coefficient omega[{m}][{m}] must be constant, has degree {leading.degree}")
    elif not np.array_equal(leading.coeffs[0], expected):
        diff = np.abs(leading.coeffs[0] - expected)
        r, c = np.unravel_index(int(np.argmax(diff)), diff.shape)
        diagnostics.append(
            f"leading symmetry mismatch: omega[{m}][{m}] entry ({r},{c}) = {leading.coeffs[0][r, c]}, "
            f"expected {expected[r, c]} for nu={nu}")

    if diagnostics:
        raise ProblemValidationError(diagnostics)
    return problem


def assemble_operator(problem: SturmProblem) -> OperatorCoefficients:
    """
    Expand l(x, D) u = sum_{i,j} (-1)^i D^i(omega_{i,j} D^j u) by the Leibniz rule.

    Returns:
        coefficients p_k, k = 0..2m, with p_{2m} = (-1)^m p_{2m}-symmetry
    """
    m, n = problem.m, problem.n
    coeffs = [MatrixPolynomial.zeros(n) for _ in range(2 * m + 1)]
    for (i, j), omega in problem.omega.items():
        if omega.is_zero():
            continue
        # Leibniz 展开 D^i(omega D^j u)
        for s in range(i + 1):
            term = omega.derivative(i - s) * ((-1) ** i * comb(i, s))
            coeffs[s + j] = coeffs[s + j] + term
    leading_sign = (-1) ** m
    return OperatorCoefficients(m=m, n=n, coeffs=coeffs, leading_sign=leading_sign,
                                symmetry=problem.symmetry)


def assemble_boundary_map(problem: SturmProblem) -> BoundaryMap:
    """
    Collect the boundary terms of the integrations by parts.

    int <D^i v, w> = sum_{r<i} (-1)^r [<D^{i-1-r} v, D^r w>]_0^1 + (-1)^i int <v, D^i w>
    with w = omega_{i,j} D^j u and D^r w expanded by the Leibniz rule.
    """
    m, n = problem.m, problem.n
    blocks: Dict[Index, MatrixPolynomial] = {}
    for (i, j), omega in problem.omega.items():
        if omega.is_zero():
            continue
        for r in range(i):
            row = i - 1 - r
            for s in range(r + 1):
                col = s + j
                term = omega.derivative(r - s) * ((-1) ** r * comb(r, s))
                blocks[(row, col)] = blocks[(row, col)] + term if (row, col) in blocks else term
    return BoundaryMap(m=m, n=n, blocks=blocks)


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def rescale(problem: SturmProblem, lam: float) -> CoefficientTable:
    """omega^lam_{i,j}(x) = lam^{2m-(i+j)} omega_{i,j}(lam x)."""
    lam = _check_lambda(lam)
    m = problem.m
    entries = {
        (i, j): omega.substitute(lam) * (lam ** (2 * m - i - j))
        for (i, j), omega in problem.omega.items()
    }
    return CoefficientTable(m, problem.n, entries)


def rescale_derivative(problem: SturmProblem, lam: float) -> CoefficientTable:
    """
    d/dlam of the rescaled table:
    (2m-i-j) lam^{2m-i-j-1} omega(lam x) + lam^{2m-i-j} x omega'(lam x).
    """
    lam = _check_lambda(lam)
    m, n = problem.m, problem.n
    entries: Dict[Index, MatrixPolynomial] = {}
    for (i, j), omega in problem.omega.items():
        exponent = 2 * m - i - j
        total = omega.derivative().substitute(lam).times_x() * (lam ** exponent)
        if exponent > 0:
            total = total + omega.substitute(lam) * (exponent * lam ** (exponent - 1))
        entries[(i, j)] = total
    return CoefficientTable(m, n, entries)


def rescaled_problem(problem: SturmProblem, lam: float) -> SturmProblem:
    """The rescaled table wrapped as a problem (omega_{m,m} is unchanged)."""
    return problem.with_omega(rescale(problem, lam).entries)


def sesquilinear_form(table: CoefficientTable, jets_v: np.ndarray, jets_u: np.ndarray,
                      xs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Quadrature of sum_{i,j} <D^i v, omega_{i,j} D^j u> for columns of jets.

    Args:
        table: coefficient table (rescaled or derivative)
        jets_v, jets_u: arrays (nodes, order*n, cols) of stacked derivatives
        xs, weights: quadrature nodes and weights on [0, 1]

    Returns:
        (cols_v, cols_u) matrix of form values
    """
    m, n = table.m, table.n
    out = np.zeros((jets_v.shape[2], jets_u.shape[2]), dtype=complex)
    for (i, j), omega in table.entries.items():
        if omega.is_zero():
            continue
        values = omega(xs)
        dv = jets_v[:, i * n:(i + 1) * n, :]
        du = jets_u[:, j * n:(j + 1) * n, :]
        out += np.einsum('q,qra,qrs,qsb->ab', weights, dv.conj(), values, du)
    return out

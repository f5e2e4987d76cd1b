"""
Exception hierarchy for sturmflow.

Every failure raised by the library derives from SturmflowError so the CLI
can map families of errors onto exit statuses.
"""

from typing import List, Optional


class SturmflowError(Exception):
    """Base class for all library errors."""


# --- Input / configuration ---

class ConfigError(SturmflowError):
    """Settings file could not be read or failed validation."""


class ProblemConfigError(SturmflowError):
    """Problem JSON could not be parsed into a SturmProblem."""


class ProblemValidationError(SturmflowError):
    """A SturmProblem violates one or more of its invariants."""

    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class DomainError(SturmflowError):
    """An argument lies outside the domain of the operation."""


# --- Hermitian linear algebra ---

class SymmetryViolationError(SturmflowError):
    """Matrix is not Hermitian to within the symmetry tolerance."""


class DegenerateBasisError(SturmflowError):
    """Basis vectors handed to a restriction are linearly dependent."""


# --- ODE engine ---

class IntegrationError(SturmflowError):
    """The ODE solver failed (step size underflow or similar)."""


class EmptyKernelError(SturmflowError):
    """Kernel extraction was requested at a non-conjugate parameter."""


# --- Superlagrangian geometry ---

class FrameError(SturmflowError):
    """A frame is rank deficient or has the wrong shape."""


class ChartDomainError(SturmflowError):
    """Subspace is not transverse to the chart complement."""


class GeometryError(SturmflowError):
    """No admissible complement could be found."""


class AdmissibilityError(SturmflowError):
    """Path endpoints meet the singular variety of the reference plane."""


# --- Pipelines ---

class RegularizationRequired(SturmflowError):
    """The problem must be delta-regularized before indices are defined."""


class EndpointDegeneracyError(RegularizationRequired):
    """The form is degenerate at an endpoint of the parameter interval."""

    def __init__(self, message: str, lam: Optional[float] = None):
        self.lam = lam
        super().__init__(message)


class NonRegularCrossingError(RegularizationRequired):
    """At least one crossing has a degenerate form, or an exact multiple crossing cancels to signature 0."""

    def __init__(self, lambdas: List[float]):
        self.lambdas = list(lambdas)
        joined = ", ".join(f"{lam:.12g}" for lam in self.lambdas)
        super().__init__(f"non-regular crossing(s) at lambda = {joined}")


class RegularizationError(SturmflowError):
    """Endpoints stayed degenerate after all random delta draws."""


class EpsilonGuardError(SturmflowError):
    """No conjugate-free interval (0, eps] could be certified."""


class CrossingFormMismatchError(SturmflowError):
    """Analytic and geometric crossing forms disagree."""


class MethodDisagreementError(SturmflowError):
    """Inertia-difference and crossing-sum spectral flows disagree."""


class ConvergenceError(SturmflowError):
    """Galerkin index did not stabilize before the maximal basis size."""

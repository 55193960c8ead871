"""Exception hierarchy shared by every stabman module."""

from __future__ import annotations


class StabmanError(Exception):
    """Base class for all library errors.

    Every subclass exposes ``code`` (a short machine-readable tag used by the
    command-line reports) and ``details`` (a JSON-serializable mapping).
    """

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def record(self) -> dict:
        return {"error": self.code, "message": str(self), "details": self.details}


class DomainError(StabmanError, ValueError):
    """An argument lies outside the domain where the operation is defined."""

    code = "domain"


class SpectralError(StabmanError):
    """Eigen-decomposition failed or produced an unusable splitting."""

    code = "spectral"


class DegenerateIntersectionError(StabmanError):
    """Two subspaces meet at an angle below the numerical floor."""

    code = "degenerate-intersection"


class MatrixExpOverflowError(StabmanError, OverflowError):
    """The matrix exponential would overflow double precision."""

    code = "exp-overflow"


class NotPartiallyHyperbolicError(StabmanError):
    """M(A|F) >= min(0, m(A|G)), so no admissible decay rate exists."""

    code = "not-partially-hyperbolic"


class EmptySideError(StabmanError):
    """One side of the requested splitting is the zero subspace."""

    code = "empty-side"


class HypothesisViolationError(StabmanError):
    """A sampled check of a standing hypothesis failed."""

    code = "hypothesis"


class GateViolationError(StabmanError):
    """The smallness condition on the first derivative is violated.

    ``details['margin']`` is ``bound - measured`` (negative on violation).
    """

    code = "gate-violation"


class ConvergenceError(StabmanError):
    """An iterative solver did not reach its tolerance."""

    code = "non-convergence"


class StepUnderflowError(StabmanError):
    """A finite-difference or integrator step became too small."""

    code = "step-underflow"


class IntegrationError(StabmanError):
    """The ODE integrator failed (blow-up or step-size collapse)."""

    code = "integration"


class DegenerateWindowError(StabmanError):
    """A decay fit window contains no usable (nonzero) states."""

    code = "degenerate-window"


class NotContractingError(StabmanError):
    """The block transverse to the zero set is not contracting."""

    code = "not-contracting"


class ConfigError(StabmanError):
    """A run configuration is malformed."""

    code = "config"

"""
Error hierarchy for the dbar reconstruction service.

Every failure raised by the library derives from ``DbarError``. The CLI maps
``exit_code`` onto the process status and the Flask app maps ``http_status``
onto the response code, so callers never need to inspect messages.
"""

from typing import Any, Dict, List, Optional, Sequence


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars, complex numbers and containers to JSON-safe values."""
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, 'item') and callable(value.item):
        try:
            return _jsonable(value.item())
        except (TypeError, ValueError):
            return str(value)
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


class DbarError(Exception):
    """Base class for all reconstruction errors."""

    exit_code = 1
    http_status = 500

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': _jsonable(self.details),
        }


class PreconditionError(DbarError):
    """Input violates a documented precondition."""

    exit_code = 2
    http_status = 400


class SupportError(PreconditionError):
    """Data does not vanish where the discretization requires it to."""


class HeaderMismatchError(PreconditionError):
    """Two grid files do not share nx / L."""


class ConfigValidationError(PreconditionError):
    """RunConfig or Phantom failed validation."""

    def __init__(self, message: str, errors: Optional[Sequence[str]] = None, **details: Any):
        super().__init__(message, errors=list(errors or []), **details)
        self.errors = list(errors or [])


class SolverError(DbarError):
    """Numerical failure inside a solver."""

    exit_code = 3
    http_status = 500


class SolverConvergenceError(SolverError):
    """Krylov iteration stopped before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int, **details: Any):
        super().__init__(message, residual=residual, iterations=iterations, **details)
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(SolverError):
    """Dense system too ill-conditioned to trust."""

    def __init__(self, message: str, condition: float, **details: Any):
        super().__init__(message, condition=condition, **details)
        self.condition = condition


class AggregateSolveError(SolverError):
    """One or more independent solves in a batch failed."""

    def __init__(self, message: str, failures: List[Dict[str, Any]], **details: Any):
        super().__init__(message, failures=failures, **details)
        self.failures = failures


class PipelineStageError(DbarError):
    """A pipeline stage failed; wraps the original error and names the stage."""

    def __init__(self, stage: str, cause: DbarError, replay_file: Optional[str] = None):
        super().__init__(
            f"Stage '{stage}' failed: {cause.message}",
            stage=stage,
            cause=cause.to_dict(),
            replay_file=replay_file,
        )
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
        self.http_status = cause.http_status

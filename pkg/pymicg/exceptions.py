from typing import Optional


class MicgError(Exception):
    """
    Base class for every error raised by pymicg.
    """
    exit_code = 1


class SetupNotDoneError(MicgError):
    """
    Exception raised when logging is used before setup.
    """
    pass


class SetupAlreadyDoneError(MicgError):
    """
    Exception raised when setup is already done.
    """
    pass


class SetupError(MicgError):
    """
    Exception raised for general setup errors.
    """
    pass


class ValidationError(MicgError):
    """
    Input data or parameters violate a documented precondition.
    """
    exit_code = 2


class CatalogSyntaxError(ValidationError):
    """
    A cutoff rule or expression could not be parsed.

    ``position`` is the 1-based index of the offending token; the end of
    input counts as one token.
    """

    def __init__(self, message: str, position: int, text: str = "") -> None:
        self.position = position
        self.text = text
        where = f" in {text!r}" if text else ""
        super().__init__(f"{message} at token {position}{where}")


class CatalogError(ValidationError):
    """Catalog structure is invalid (duplicate ids, empty dimension, ...)."""


class SchemaError(ValidationError):
    """Tabular input is missing columns or has duplicate child ids."""


class EmptyMatrixError(ValidationError):
    """Every child was excluded while coding deprivations."""


class WeightError(ValidationError):
    """Weights are negative, all zero, or reference unknown dimensions."""


class PreconditionError(ValidationError):
    """An operation precondition does not hold."""


class RankDeficiencyError(ValidationError):
    """A design matrix is not of full column rank."""


class DegenerateDataError(ValidationError):
    """Data are constant where variation is required."""


class UnknownChildError(ValidationError):
    """A child id is not part of the fitted set."""


class ChartError(ValidationError):
    """Chart inputs are out of range."""


class ConvergenceError(MicgError):
    """
    An iterative numerical method did not converge.
    """

    def __init__(self, message: str, iterations: Optional[int] = None) -> None:
        self.iterations = iterations
        super().__init__(message)


class BlowUpError(MicgError):
    """
    An integrator produced a non-finite state.
    """

    def __init__(self, time: float, message: Optional[str] = None) -> None:
        self.time = time
        super().__init__(message or f"non-finite state at t={time:.6g}")


class SingularMetricError(MicgError):
    """The metric tensor is singular at an evaluated point."""


class InfeasibleProgramError(MicgError):
    """The quantile-regression linear program is infeasible or unbounded."""


class InputError(MicgError):
    """
    A file could not be read or written.
    """
    exit_code = 3

    def __init__(self, path, message: Optional[str] = None) -> None:
        self.path = str(path)
        super().__init__(message or f"cannot access {self.path}")

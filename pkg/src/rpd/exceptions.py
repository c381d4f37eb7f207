"""Exception types shared across the package."""


class RPDError(Exception):
    """Base class for all package errors."""


class StructureError(RPDError, ValueError):
    """Dimension or block-structure mismatch."""


class UnsupportedOperation(RPDError, NotImplementedError):
    """Requested operation is not available for this operator kind."""


class NormEstimateError(RPDError):
    """Power iteration did not converge within the iteration cap.

    Attributes
    ----------
    interval : tuple of float
        The last two norm estimates, as ``(low, high)``.
    iterations : int
    """

    def __init__(self, message, interval, iterations):
        super().__init__(message)
        self.interval = interval
        self.iterations = iterations


class ActivationError(RPDError):
    """Invalid activation pattern or failed sampling."""


class ClosureError(ActivationError):
    """Activation pattern violates the coupling rule required by a step."""


class InapplicableError(RPDError):
    """Algorithm cannot be applied to this problem (e.g. nonzero resolvent part)."""


class ConditionError(RPDError):
    """Step-size condition fails and the run was not forced."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SpecError(RPDError, ValueError):
    """Invalid or inconsistent problem description."""


class ReferenceUnavailable(RPDError):
    """No reference solution can be produced for this problem."""

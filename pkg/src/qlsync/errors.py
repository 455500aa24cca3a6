"""Exception and warning types shared across the package."""


class QLError(Exception):
    """Base class for all errors raised by qlsync."""

    code = "error"


class ParameterError(QLError, ValueError):
    code = "parameter"


class ValidationError(QLError, ValueError):
    code = "validation"


class SamplingError(QLError, RuntimeError):
    code = "sampling"


class CapacityError(QLError, MemoryError):
    """Raised when a dense object would exceed the configured memory cap."""

    code = "capacity"

    def __init__(self, message, required_bytes, cap_bytes):
        super().__init__(message)
        self.required_bytes = int(required_bytes)
        self.cap_bytes = int(cap_bytes)


class ConvergenceError(QLError, RuntimeError):
    code = "convergence"

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = [] if residuals is None else list(residuals)


class TruncationError(QLError, ValueError):
    code = "truncation"

    def __init__(self, message, weight):
        super().__init__(message)
        self.weight = float(weight)


class IntegrationError(QLError, FloatingPointError):
    code = "integration"

    def __init__(self, message, time):
        super().__init__(message)
        self.time = float(time)


class UndefinedAngleError(QLError, ValueError):
    code = "undefined-angle"

    def __init__(self, message, index, time):
        super().__init__(message)
        self.index = int(index)
        self.time = float(time)


class UndefinedErrorSignal(QLError, ValueError):
    """A relative error or alignment was requested against a zero vector."""

    code = "undefined-error"


class DegenerateProjectionWarning(UserWarning):
    pass

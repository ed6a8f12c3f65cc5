"""Exception hierarchy shared by the samplers and the CLI."""


class LqgError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigurationError(LqgError, ValueError):
    exit_code = 2


class ParameterError(ConfigurationError):
    pass


class GeometryError(LqgError, ValueError):
    exit_code = 2


class SingularityError(LqgError, ValueError):
    pass


class NumericError(LqgError, ArithmeticError):
    pass


class DegenerateMeasureError(LqgError, ValueError):
    pass


class UnsupportedRegimeError(ParameterError):
    pass


class BudgetError(LqgError, RuntimeError):
    """A rejection or truncation budget ran out; carries diagnostics."""

    exit_code = 3

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class TruncationError(BudgetError):
    pass


class InsufficientESSError(LqgError, RuntimeError):
    exit_code = 4

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

"""Exception types shared across the package."""


class PVDecayError(Exception):
    """Base class for all package errors."""


class DataError(PVDecayError, ValueError):
    """Input data is malformed, incomplete or inconsistent."""


class SchemaError(DataError):
    """A cached artifact has the wrong magic header or schema version."""


class NumericalError(PVDecayError, ArithmeticError):
    """A fit or search produced a non-finite or degenerate result."""


class ParseError(DataError):
    """A single dump line could not be parsed.

    Carries the 1-based line number so callers can tally and continue.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)

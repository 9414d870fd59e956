"""Exception types raised across the package."""


class SirdxError(Exception):
    """Base class for all package errors."""


class NonFiniteError(SirdxError, ArithmeticError):
    """A state, parameter or loss became NaN or infinite."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NotApplicableError(SirdxError, ValueError):
    """A closed-form result was requested outside its domain."""


class EmptyTrajectoryError(SirdxError, ValueError):
    pass


class EmptyFitError(SirdxError, ValueError):
    pass


class TooFewRowsError(SirdxError, ValueError):
    pass


class BadKError(SirdxError, ValueError):
    pass


class ShapeMismatchError(SirdxError, ValueError):
    pass


class ZeroVarianceError(SirdxError, ValueError):
    pass


class SingleClassError(SirdxError, ValueError):
    """Training labels contain only one class."""


class LengthMismatchError(SirdxError, ValueError):
    pass


class EmptyInputError(SirdxError, ValueError):
    pass


class ParseError(SirdxError, ValueError):
    """Malformed dataset or config file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line

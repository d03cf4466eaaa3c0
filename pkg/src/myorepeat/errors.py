"""Exception and warning types raised across the pipeline."""


class MyoRepeatError(Exception):
    """Base class for every error raised by this package."""


class NoOverlap(MyoRepeatError, ValueError):
    pass


class MalformedStream(MyoRepeatError, ValueError):
    pass


class ParseError(MyoRepeatError, ValueError):
    """Raised when a file violates its schema.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidCutoff(MyoRepeatError, ValueError):
    pass


class SignalTooShort(MyoRepeatError, ValueError):
    pass


class WindowTooShort(MyoRepeatError, ValueError):
    pass


class ShapeMismatch(MyoRepeatError, ValueError):
    pass


class EmptyInput(ShapeMismatch):
    pass


class DegenerateProblem(MyoRepeatError, ValueError):
    pass


class EmptyValidation(MyoRepeatError, ValueError):
    pass


class InvalidWindow(MyoRepeatError, ValueError):
    pass


class EmptySequence(MyoRepeatError, ValueError):
    pass


class UnknownLabel(MyoRepeatError, ValueError):
    pass


class RepetitionCountMismatch(MyoRepeatError, ValueError):
    pass


class MissingAcquisition(MyoRepeatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing acquisition"


class InsufficientDays(MyoRepeatError, ValueError):
    pass


class NoWindowsWarning(UserWarning):
    pass


class RepetitionCountWarning(UserWarning):
    pass

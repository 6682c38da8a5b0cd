"""Exception hierarchy shared by all modules."""


class ViewAlignError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ViewAlignError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class BehindCameraError(DomainError):
    """A point has non-positive camera-frame depth and cannot be projected."""


class InsufficientDataError(ViewAlignError, ValueError):
    pass


class DegenerateGeometryError(ViewAlignError, ArithmeticError):
    """Normal equations are singular; the parameters are not identifiable."""


class NoSupervisionError(ViewAlignError, ValueError):
    pass


class NoValidPixelsError(ViewAlignError, ValueError):
    pass


class DivergenceError(ViewAlignError, ArithmeticError):
    """Optimization blew up. ``trace`` holds the losses seen so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class ParseError(ViewAlignError, ValueError):
    """Malformed or truncated file. ``offset`` is the byte where parsing failed."""

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset

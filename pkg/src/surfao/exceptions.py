"""Exception hierarchy shared by the library and the command line."""


class SurfaoError(Exception):
    """Base class for every error raised by surfao."""


class InvalidInputError(SurfaoError, ValueError):
    pass


class InsufficientDataError(InvalidInputError):
    pass


class GridTooSmallError(InvalidInputError):
    pass


class ImputationError(InvalidInputError):
    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


class FormatError(SurfaoError):
    """Malformed file. ``offset`` is the byte offset of the problem, if known."""

    def __init__(self, message, offset=None, path=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.offset = offset
        self.path = path


class UnsupportedFormatError(FormatError):
    pass


class NumericalError(SurfaoError, ArithmeticError):
    pass


class DegenerateDataError(NumericalError):
    """No usable projection direction could be drawn for a point cloud."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} at grid point (j={location[0]}, k={location[1]})"
        super().__init__(message)
        self.location = location


class SingularUpdateError(NumericalError):
    pass

"""Exception hierarchy.

Every error raised by the pipeline derives from :class:`EquiboundError` and
carries the name of the stage that raised it, so the command line driver can
report ``[module] message`` without inspecting the type.
"""


class EquiboundError(Exception):
    module = "equibound"


class ModelError(EquiboundError, ValueError):
    module = "model"


class ModelSyntaxError(ModelError):
    """Malformed model text. ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class NegativeRateError(ModelError):
    pass


class LyapunovError(EquiboundError):
    module = "lyapunov"


class UnboundedDriftError(LyapunovError):
    pass


class InfeasibleInvariantsError(LyapunovError):
    pass


class StateSpaceError(EquiboundError):
    module = "statespace"


class EmptyWindowError(StateSpaceError):
    pass


class WindowOverflowError(StateSpaceError):
    pass


class BoxOverflowError(StateSpaceError):
    pass


class DriftCertificateError(StateSpaceError):
    """A lattice state in the window has drift above the certified maximum."""


class BoundingError(EquiboundError):
    module = "bounding"


class SingularWindowError(BoundingError):
    pass


class MixedSignError(BoundingError):
    def __init__(self, message, column):
        self.column = column
        super().__init__(message)


class OracleError(EquiboundError):
    module = "oracle"


class MultipleClosedClassesError(OracleError):
    def __init__(self, message, classes):
        self.classes = classes
        super().__init__(message)


class OracleSizeError(OracleError):
    pass

"""Exception hierarchy shared by every subpackage."""


class SoundLocError(Exception):
    """Base class for all errors raised by soundloc."""


class GeometryError(SoundLocError, ValueError):
    """A position lies outside the room or violates a geometric precondition."""


class DegenerateGeometryError(GeometryError):
    """Geometry is singular: coincident points, coplanar anchors, rank loss."""


class NoSolutionError(SoundLocError):
    """Measurements are mutually inconsistent and admit no exact solution."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ShapeError(SoundLocError, ValueError):
    pass


class DegenerateSignalError(SoundLocError, ValueError):
    """A signal is silent (or otherwise unusable) where energy is required."""


class InsufficientDataError(SoundLocError, ValueError):
    pass


class AlignmentError(SoundLocError, ValueError):
    pass


class SamplingError(SoundLocError):
    pass


class FormatError(SoundLocError):
    """A serialized file is truncated, corrupt or of an unsupported version."""


class ConfigError(SoundLocError, ValueError):
    pass


class ContractError(SoundLocError, ValueError):
    pass


class NonFiniteError(SoundLocError, FloatingPointError):
    """An operation produced NaN or Inf."""


class DivergenceError(SoundLocError):
    pass


class ExperimentError(SoundLocError):
    pass

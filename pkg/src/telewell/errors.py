"""Exception hierarchy.

Every error raised by the library derives from :class:`TelewellError`; the
CLI maps the four families below onto its exit codes.
"""


class TelewellError(Exception):
    """Base class for all library errors."""


class ConfigError(TelewellError, ValueError):
    """Malformed or inconsistent input configuration."""


class GeometryError(TelewellError, ValueError):
    """Regime or geometry does not admit the requested quantity."""


class NonConvergent(TelewellError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


# configuration family
class InvalidVelocities(ConfigError):
    pass


class NotDoubleWell(ConfigError):
    pass


class DegenerateCurvature(ConfigError):
    pass


# geometry family
class DegenerateRoot(GeometryError):
    pass


class Degenerate(GeometryError):
    pass


class WrongRegime(GeometryError):
    pass


class OutOfInterval(GeometryError):
    pass


class OutOfBranch(GeometryError):
    pass


class OutOfDomain(GeometryError):
    pass


class PoleAtCriticalPoint(GeometryError):
    pass


class InfiniteMean(GeometryError):
    pass


class AmbiguousCase(GeometryError):
    pass


class InternalConsistencyError(TelewellError, RuntimeError):
    """A computed quantity left its admissible range by more than its error."""

"""Exception types raised across the package."""


class PfisoError(Exception):
    """Base class for every error raised by pfiso."""


class ScenarioError(PfisoError, ValueError):
    """A scenario file failed to parse or validate.

    ``field`` names the offending config key (dotted path) when known and
    ``path`` the file involved, if any.
    """

    def __init__(self, message, field=None, path=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
        self.path = None if path is None else str(path)


class NumericalDomainError(PfisoError, ArithmeticError):
    """A potential term produced a non-finite value or gradient."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class LocalMinimumError(PfisoError):
    """The virtual force vanished, so no reference heading exists."""

    def __init__(self, message, index=None, vehicle_id=None):
        super().__init__(message)
        self.index = index
        self.vehicle_id = vehicle_id


class DegenerateWaypointsError(PfisoError, ValueError):
    """Fewer than four distinct abscissae; the cubic fit is rank deficient."""


class BusIntegrityError(PfisoError):
    """A sender published more than one message in a single tick."""


class OracleGuardError(PfisoError, ValueError):
    """A brute-force oracle was asked for a problem too large to enumerate."""


class DynamicsDivergenceError(PfisoError, FloatingPointError):
    """Vehicle integration produced a non-finite state."""

    def __init__(self, message, tick=None, vehicle_id=None):
        super().__init__(message)
        self.tick = tick
        self.vehicle_id = vehicle_id

"""Exception hierarchy.

Everything raised on purpose by the package derives from
:class:`SensorGibbsError`.  Numerical failures (ill-conditioned covariance
blocks, degenerate noise, infeasible multipliers) derive from
:class:`NumericalError` so the CLI can map them to their own exit code.
"""


class SensorGibbsError(Exception):
    """Base class for package errors."""


class NumericalError(SensorGibbsError):
    """A computation could not produce a trustworthy number."""


class SingularSubmatrix(NumericalError):
    pass


class DegenerateNoise(NumericalError):
    pass


class InvalidEnergy(NumericalError):
    pass


class Infeasible(NumericalError):
    """No multiplier brackets the requested mean number of active sensors."""


class ScheduleViolation(SensorGibbsError):
    pass


class WeightViolation(SensorGibbsError):
    pass


class TooLarge(SensorGibbsError):
    """Exhaustive enumeration requested beyond the desk-scale cap."""


class NotStochastic(SensorGibbsError):
    pass


class DimensionMismatch(SensorGibbsError):
    pass


class EmptyWindow(SensorGibbsError):
    pass


class UnknownPreset(SensorGibbsError):
    pass


class ConfigError(SensorGibbsError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

"""Exception hierarchy shared by all modules."""


class SensingError(Exception):
    """Base class for every error raised by ofdmsense."""


class ConfigurationError(SensingError, ValueError):
    """Invalid or inconsistent configuration / input dimensions."""


class DegenerateModelError(SensingError, ValueError):
    """The requested model has no well-defined value (e.g. zero normalizer)."""


class CalibrationError(SensingError, ValueError):
    """Threshold calibration cannot reach the requested resolution."""


class NumericalError(SensingError, ArithmeticError):
    """A numerical routine failed to converge."""

"""Exception hierarchy shared across the toolkit."""


class TiAdcError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TiAdcError):
    """Invalid or inconsistent configuration."""


class NumericalDegeneracyError(TiAdcError):
    """Filter covariance lost positive definiteness (innovation variance <= 0)."""


class GainDegeneracyError(TiAdcError):
    """Estimated gain 1 + beta too close to zero to invert."""


class SingularRowError(TiAdcError):
    """A reconstruction row has a (near-)zero center tap."""


class NmseUndefinedError(TiAdcError):
    """NMSE requested against an all-zero reference."""

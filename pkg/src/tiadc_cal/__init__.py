"""Time-interleaved ADC mismatch tracking and signal reconstruction toolkit."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    GainDegeneracyError,
    NmseUndefinedError,
    NumericalDegeneracyError,
    SingularRowError,
    TiAdcError,
)
from .signal_model import MismatchState, MultitoneSignal, TiAdcConfig  # noqa: F401

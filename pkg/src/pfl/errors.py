class PFLError(Exception):
    """Base class for engine errors."""


class ConfigurationError(PFLError, ValueError):
    """Invalid model, grid, term or scenario configuration."""


class InputError(PFLError, ValueError):
    """Invalid data handed to a numerical routine (e.g. empty samples)."""


class UnsupportedInstrumentError(ConfigurationError):
    """Instrument cannot be priced under the chosen model."""


class NumericalError(PFLError, ArithmeticError):
    """Non-finite values produced during simulation or aggregation."""

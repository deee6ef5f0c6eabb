"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes (config/parse -> 2, numerical -> 3,
training -> 4), so library code should raise the most specific class.
"""


class MMSBMError(Exception):
    """Base class for all package errors."""


class ScheduleError(MMSBMError, ValueError):
    """Malformed snapshot schedule (non-ascending, duplicates, too short)."""


class ConfigError(MMSBMError, ValueError):
    """Invalid run configuration; message names the offending path."""


class ParseError(MMSBMError, ValueError):
    """Malformed dataset file; message carries the line number."""


class NumericalError(MMSBMError, RuntimeError):
    """Numerical breakdown: lost positive-definiteness, ill conditioning,
    non-finite intermediate values."""


class SimulationError(MMSBMError, RuntimeError):
    """SDE integration produced a non-finite state; message carries the time."""


class TrainingError(MMSBMError, RuntimeError):
    """Training aborted (divergent loss, exhausted data)."""

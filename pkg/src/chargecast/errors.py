"""Exception hierarchy shared across the package.

Every error raised deliberately by this package derives from
:class:`ChargecastError` so callers (and the CLI) can distinguish our
failures from genuine bugs.  The CLI maps the subclasses to exit codes:
usage problems, bad input data, and numerical failures each get their own
code.
"""


class ChargecastError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ChargecastError):
    """Bad command-line arguments or an unusable flag combination."""


class ConfigError(ChargecastError):
    """Inconsistent or out-of-range configuration values."""


class DataError(ChargecastError):
    """Malformed, inconsistent, or insufficient input data."""


class ShapeError(ChargecastError):
    """Array arguments whose shapes do not line up."""


class NumericalError(ChargecastError):
    """Non-finite values or a failed numerical procedure."""


class NotFittedError(ChargecastError):
    """A forecaster was asked to predict before it was fitted."""

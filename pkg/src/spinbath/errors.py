"""Exception hierarchy.

Everything raised on purpose derives from SpinbathError so callers (and the
CLI) can separate library failures from programming errors.
"""


class SpinbathError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SpinbathError, ValueError):
    """An argument is outside the physical or mathematical domain."""


class ParseError(SpinbathError, ValueError):
    """Malformed input text. Carries a line number when one is known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(SpinbathError, ValueError):
    """Input parsed but violates a semantic invariant."""


class TableLookupError(SpinbathError, KeyError):
    """Element or isotope not present in the isotope table."""


class UnsupportedOrderError(DomainError):
    """Cluster larger than the supported correlation order."""


class HomonuclearPairError(DomainError):
    """Decoupling field requested for a pair with identical g-factors."""


class FitError(SpinbathError, RuntimeError):
    """Least-squares fit failed to converge or gave unusable parameters."""


class FitRangeError(FitError):
    """The curve carries no decay information over the sampled range."""


class CalibrationError(SpinbathError, ValueError):
    """Calibration dataset does not span the required axes."""


class ConfigurationError(SpinbathError, ValueError):
    """Missing or malformed runtime configuration (keys, env vars)."""


class FetchError(SpinbathError, RuntimeError):
    """Remote corpus fetch failed."""


class PartialFetchError(FetchError):
    """Some pages failed after retries; carries what did arrive."""

    def __init__(self, message, failed_pages=(), records=()):
        super().__init__(message)
        self.failed_pages = list(failed_pages)
        self.records = list(records)

"""Exception hierarchy shared by every stage of the detection stack."""


class RPeakError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(RPeakError, ValueError):
    """A file is missing its header or cannot be parsed."""


class DataError(RPeakError, ValueError):
    """A sample value is unusable (NaN, Inf, non-numeric)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UnsupportedRateError(RPeakError, ValueError):
    """Resampling between rates that are not integer multiples."""


class InsufficientDataError(RPeakError, ValueError):
    """The input is shorter than the support of an operation."""


class ConfigurationError(RPeakError, ValueError):
    """Invalid or inconsistent configuration."""


class InitError(RPeakError, ValueError):
    """A detector could not be initialized from the supplied data."""


class TraceError(RPeakError, ValueError):
    """An activity trace violates its invariants."""


class CalibrationError(RPeakError, ValueError):
    """Cost-model calibration has no admissible solution."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class UndefinedScoreError(RPeakError, ValueError):
    """A score was requested for an empty match."""


class IntegrityError(RPeakError):
    """Checksum mismatch on a corpus file."""


class UnitError(RPeakError, ValueError):
    """Inputs carry incompatible units or sampling rates."""

"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(ValueError):
    """A configuration violates its invariants."""


class DegenerateError(DomainError):
    """A statistical model is degenerate (e.g. zero variance)."""


class CalibrationError(RuntimeError):
    """Detector calibration produced unusable thresholds."""


class EndOfTrace(Exception):
    """A window or search interval runs past the end of the trace."""


class UndefinedMetric(ValueError):
    """A metric cannot be evaluated on the supplied data."""


class TraceFormatError(ValueError):
    """A trace file is malformed.

    ``line`` is the 1-based line number of the offending row, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

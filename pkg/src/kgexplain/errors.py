"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class KgExplainError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(KgExplainError):
    """Invalid pipeline configuration; message lists every problem found."""


class DataError(KgExplainError):
    """Malformed or inconsistent input data / artifacts."""


class ParseError(DataError):
    """Malformed triple input; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class NumericError(KgExplainError):
    """Numeric failure (divergence, ill-posed fit)."""


class TrainingDiverged(NumericError):
    """Embedding training produced a non-finite loss."""


class CalibrationError(NumericError):
    """Threshold calibration failed (single class or anti-correlated scores)."""


class ExplanationError(KgExplainError):
    """A single explanation job could not be completed (context too small,
    calibration failed, ...). Pipelines treat the job as not covered."""

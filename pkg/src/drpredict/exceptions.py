"""Exception types shared across the package."""


class DrPredictError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DrPredictError):
    """A data file could not be parsed.

    Carries the 1-based row number (header = row 1) and the offending
    column name when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class ValidationError(DrPredictError):
    """Input data violates a structural requirement (bad treatment code,
    non-finite outcome, empty arm, ...)."""


class DomainError(DrPredictError):
    """An argument lies outside the mathematical domain of an operation."""


class InsufficientData(DrPredictError):
    """Too few observations for the requested computation."""


class ConvergenceError(DrPredictError):
    """An iterative solver exceeded its iteration cap.

    This signals a bug in the bracketing logic, not a data condition.
    """


class ZeroTauError(DrPredictError):
    """A bound estimate is numerically zero, outside the smooth regime of
    the asymptotic loadings; callers must switch to the zero-limit path."""


class UnsupportedRegime(DrPredictError):
    """The requested quantity has a non-normal limit law that this package
    does not implement."""


class UnsupportedConfig(DrPredictError):
    """The configuration is valid in general but not for this operation."""


class OrderError(DrPredictError):
    """Interval endpoints are materially inverted."""


class DensityError(DrPredictError):
    """A kernel density estimate fell below the working floor where its
    reciprocal is needed."""


class DegenerateSample(DrPredictError):
    """A simulated draw produced an unusable sample (e.g. an empty arm)."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, data errors -> 3,
everything else -> 1.
"""


class FlexsimError(Exception):
    """Base class for all package errors."""


class ConfigError(FlexsimError):
    """Invalid configuration or command-line usage."""


class ValidationError(FlexsimError):
    """Input data violates a documented invariant (bad CSV row, negative power, ...)."""


class InsufficientDataError(ValidationError):
    """Not enough data to perform the requested operation."""


class DegenerateDataError(ValidationError):
    """Data is structurally unusable (e.g. single-class training labels)."""


class CoverageError(ValidationError):
    """Market series does not cover the requested horizon."""


class BudgetExceededError(FlexsimError):
    """Exact solver instance is larger than the enumeration budget."""


class ScheduleRegressionError(FlexsimError):
    """A schedule costs more than doing nothing; the no-op was always feasible."""


class StaleArtifactError(FlexsimError):
    """A pipeline stage's upstream artifact is missing or out of date."""

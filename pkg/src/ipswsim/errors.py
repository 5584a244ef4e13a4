"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IpswSimError(Exception):
    """Base class for all package errors."""


class SpecificationError(IpswSimError, ValueError):
    """A population, scenario or weighting specification is invalid.

    ``field`` names the offending attribute so callers can report it.
    """

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class OutcomeGenerationError(IpswSimError, ValueError):
    """Potential outcomes cannot be generated for a cohort."""

    def __init__(self, column: str, reason: str = "column is UNMEASURED"):
        self.column = column
        super().__init__(f"{column}: {reason}")


class NonIdentifiedError(IpswSimError, ValueError):
    """A selection-model coefficient is not identified (constant column)."""


class NumericalError(IpswSimError, ArithmeticError):
    """Domain error in a numerical routine (zero denominator, zero probability)."""


class ConfigError(IpswSimError, ValueError):
    """Configuration file violates the schema.

    ``path`` is a dotted field path, e.g. ``populations.trial.age_sd``.
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path or '<root>'}: {reason}")

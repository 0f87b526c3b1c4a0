"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (bad activation id, unknown key, ...)."""


class NumericError(FloatingPointError):
    """A non-finite value showed up where a finite one is required."""


class DomainError(ValueError):
    """A point lies outside the region an operation is defined on."""

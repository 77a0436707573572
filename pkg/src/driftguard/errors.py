"""Exception types shared across the package."""


class DriftGuardError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(DriftGuardError, ValueError):
    """A configuration value or combination of values is invalid."""


class InputError(DriftGuardError, ValueError):
    """Input data (records, arrays, artifacts) violates the expected schema."""

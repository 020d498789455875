"""Exception types shared across the package."""


class CerberusError(Exception):
    """Base class for all package errors."""


class ConfigError(CerberusError):
    """Invalid configuration or parameters (CLI exit code 3)."""


class DataError(CerberusError):
    """Malformed or inconsistent input data."""


class MissingArtifactError(CerberusError):
    """A required upstream pipeline artifact is absent or stale (CLI exit code 2)."""

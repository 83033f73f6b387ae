"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Array shapes or extents do not match what an operation requires."""


class ConfigError(ValueError):
    """Invalid configuration value, file, or parameter structure."""


class NumericError(ValueError):
    """Non-finite values showed up where finite ones are required."""


class ResourceGuardError(RuntimeError):
    """A guarded operation would exceed its configured size cap."""


class GenerationError(RuntimeError):
    """Synthetic data generation could not satisfy its constraints."""

"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent geometry, dimensions, or layer configuration."""


class ValidationError(ValueError):
    """Experiment configuration failed validation; message lists every violation."""

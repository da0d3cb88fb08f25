"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a run configuration fails schema validation."""


class DegenerateInputError(ValueError):
    """Raised when a statistic is undefined (e.g. zero variance) instead of returning NaN."""


class NonFiniteError(RuntimeError):
    """Raised when a NaN/Inf shows up in data, activations, or the loss."""

"""Exception types shared across training loops and the CLI."""


class DivergenceError(RuntimeError):
    """Raised when a training loss stops being finite."""


class FreezeViolation(RuntimeError):
    """Raised when a parameter contracted to stay frozen received a
    gradient or changed value."""


class ConfigError(ValueError):
    """Raised for invalid experiment configuration files."""


class IntegrityError(RuntimeError):
    """Raised when stored artifact bytes disagree with their manifest."""

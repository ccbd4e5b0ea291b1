class ConfigError(ValueError):
    """An invalid configuration value; the message names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfidenceClampWarning(RuntimeWarning):
    """A confidence hit exactly 0 or 1 and was clamped before taking a log."""

"""Exception types raised across the toolkit."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [message])


class NonSquareAPCount(ConfigError):
    pass


class DimensionMismatch(ValueError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class FactorizationFailure(ArithmeticError):
    pass


class EmptyInput(ValueError):
    pass


class MissingManifest(FileNotFoundError):
    pass

"""Exception types shared across the package."""


class GimbalError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GimbalError, ValueError):
    """Non-finite or out-of-domain input to a model function."""


class ConfigError(GimbalError, ValueError):
    """Invalid scenario/controller configuration."""


class NumericError(GimbalError, ArithmeticError):
    """Numerical failure during simulation or training."""

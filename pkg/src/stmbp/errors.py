"""Exception hierarchy; each class maps to a CLI exit code."""


class StmbpError(Exception):
    exit_code = 1


class DataError(StmbpError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class ConfigError(StmbpError, ValueError):
    exit_code = 2


class NumericalError(StmbpError, ArithmeticError):
    """Non-finite loss or parameters during training."""

    exit_code = 3


class CheckpointError(DataError):
    pass

"""Structured errors shared across the package.

The command-line runner maps these onto stable exit codes, so new failure
modes should reuse one of these classes rather than raising bare exceptions.
"""


class ConfigError(ValueError):
    """Bad configuration value, unparseable config file, or contract misuse."""


class ShapeError(ValueError):
    """Tensor shape mismatch; message names the op and the offending shapes."""


class NumericError(ArithmeticError):
    """NaN or Inf detected at an op boundary."""


class DataFormatError(ValueError):
    """Malformed or missing dataset file."""


class DegenerateGameError(ValueError):
    """Game parameters admit no meaningful saddle point."""


class CheckpointError(ValueError):
    """Unreadable checkpoint or version mismatch."""

"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 1,
DataError -> 2, NumericError (and anything unexpected) -> 3.
"""


class MedSpecialtyError(Exception):
    """Base class for all package errors."""


class ConfigError(MedSpecialtyError):
    """Invalid configuration or command usage."""


class DataError(MedSpecialtyError):
    """Bad input data: missing files, malformed CSV, bad model files."""


class NumericError(MedSpecialtyError):
    """Numerical failure during training or inference (NaN/Inf, divergence)."""

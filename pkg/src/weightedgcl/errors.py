"""Exception hierarchy shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class WeightedGCLError(Exception):
    """Base class for all package errors."""


class ConfigError(WeightedGCLError):
    """Invalid configuration value, unknown key, or inconsistent setup."""


class DataError(WeightedGCLError):
    """Unusable input data (empty dataset, bad ids, missing files)."""


class ParseError(DataError):
    """Malformed input file; message carries the offending line number."""


class NumericError(WeightedGCLError):
    """Non-finite loss or gradient encountered during training."""

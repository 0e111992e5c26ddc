"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
NumericError -> 3, DataFormatError and OSError -> 4.
"""


class GncmixError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GncmixError):
    """Invalid or missing configuration (file keys, flags, dimensions)."""


class NumericError(GncmixError):
    """Numerical failure: non-finite energy, degenerate variances, ..."""


class DataFormatError(GncmixError):
    """Malformed input file: bad header, wrong payload size, NaN data."""


class ReflectionError(NumericError):
    """Boundary reflection did not terminate (step size far too large)."""


class RankDeficiencyError(NumericError):
    """Image spans fewer than the requested number of directions."""

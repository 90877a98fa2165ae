"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and input problems exit
with 2, numeric aborts with 3.
"""


class ConfigError(ValueError):
    """Bad configuration: unknown key, wrong type, missing file, shape mismatch."""


class QueryError(ValueError):
    """Out-of-range or empty query against a schedule or log."""


class AnalysisError(ValueError):
    """Analysis cannot proceed (degenerate direction, missing regime, zero variance)."""


class NumericError(ArithmeticError):
    """Non-finite value encountered where finiteness is required."""

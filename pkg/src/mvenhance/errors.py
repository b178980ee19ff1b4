"""Exception taxonomy shared across the package.

CLI exit-code mapping: usage problems -> 1, DataError (and subclasses) -> 2,
NumericDomainError -> 3.
"""


class DataError(ValueError):
    """Bad input data: missing/malformed files, schema violations."""


class DimensionError(DataError):
    """Shape or geometry mismatch between operands."""


class NumericDomainError(ArithmeticError):
    """A computation produced NaN/Inf from finite inputs."""


class ContractError(RuntimeError):
    """API misuse: non-scalar backward seed, repeated backward, missing grads."""


class UsageError(Exception):
    """Bad command-line invocation: unknown subcommand, flag, or override key."""

"""
Exception types raised by the rstools package.

Library code raises these; entry points (rsclt.py, acceptance_runner.py)
map them to exit codes and log messages.
"""


class RSToolsError(Exception):
    """Base class for every expected, user-facing failure."""


class ParameterError(RSToolsError, ValueError):
    """An argument, scheme, model or test function is invalid."""


class InsufficientDataError(RSToolsError):
    """Too few observations for the requested statistic."""


class DataError(RSToolsError):
    """Input data is malformed or violates an invariant."""


class TickParseError(DataError):
    """A row of a tick file could not be parsed."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DegenerateVarianceError(RSToolsError):
    """A variance that must be strictly positive is not."""


class UsageError(RSToolsError):
    """Unknown flag, subcommand or malformed command line."""


class ReplicationError(RSToolsError):
    """A single Monte Carlo replication failed; carries its coordinates."""

    def __init__(self, n, rep, grid_seed, path_seed, cause):
        super().__init__(f"replication failed (n={n}, rep={rep}, grid_seed={grid_seed}, "
                         f"path_seed={path_seed}): {cause}")
        self.n = n
        self.rep = rep
        self.grid_seed = grid_seed
        self.path_seed = path_seed
        self.cause = cause

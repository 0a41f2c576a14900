"""Exception hierarchy shared by all zipnets modules.

The CLI maps these onto stable exit codes: DataError (and subclasses) to 2,
NumericalError to 3. Anything else is a bug.
"""


class ZipnetsError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ZipnetsError):
    """Invalid or inconsistent input data (graphs, logs, block files)."""


class ParseError(DataError):
    """Malformed text input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PairSpaceMismatch(DataError):
    """Model and graph disagree on (n_nodes, directed, loops)."""


class NumericalError(ZipnetsError):
    """A numerical routine failed (domain error, non-convergence, ...)."""

"""Exception hierarchy shared across the package."""


class SgcnError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SgcnError, ValueError):
    exit_code = 1


class DimensionError(SgcnError, ValueError):
    exit_code = 3


class VocabularyError(SgcnError, IndexError):
    exit_code = 2


class DataError(SgcnError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class NumericError(SgcnError, FloatingPointError):
    exit_code = 3


class StateError(SgcnError, ValueError):
    """Optimizer state does not line up with the parameters it is applied to."""

    exit_code = 3


class CheckpointError(SgcnError, IOError):
    exit_code = 2

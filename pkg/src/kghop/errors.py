"""Exception hierarchy. CLI maps these to distinct exit codes."""


class KghopError(Exception):
    """Base class for all package errors."""


class ConfigError(KghopError):
    """Invalid configuration value or inconsistent settings."""


class DataError(KghopError):
    """Problem with an input file or dataset record."""


class ParseError(DataError):
    """Malformed input line; carries the 1-based line number when known."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class VocabMismatchError(DataError):
    """Artifact was built against a different vocabulary than the one loaded."""


class ContractError(KghopError):
    """A caller violated an operation precondition."""


class EncoderError(KghopError):
    """State encoder failed (remote endpoint down, bad response, ...)."""

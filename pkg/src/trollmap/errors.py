"""Exception types shared across pipeline stages.

Each family maps onto one CLI exit code (see ``trollmap.cli``).
"""


class TrollmapError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(TrollmapError):
    """Malformed, undecodable or schema-violating input."""

    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    pass


class EncodingError(ParseError):
    pass


class DuplicateUserError(InputError):
    pass


class DegenerateDataError(TrollmapError):
    """Numeric problem: non-finite values, too few clusters, and similar."""

    exit_code = 3


class ArtifactError(InputError):
    """Saved artifacts (model file, feature CSV) are corrupt or inconsistent."""

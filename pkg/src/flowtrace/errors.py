"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class PrematurePressError(InvalidInputError):
    """A trial trace starts with force already above the press threshold."""


class InsufficientDataError(InvalidInputError):
    """Not enough observations to compute the requested quantity."""


class ProtocolError(RuntimeError):
    """A streamed message violates ordering or session-state rules."""


class DegenerateFitError(ArithmeticError):
    """The regression design matrix is rank deficient (e.g. constant column)."""


class DegenerateDataError(ArithmeticError):
    """A statistic is undefined on this data (zero variance, no power, ...)."""


class FormatError(ValueError):
    """An on-disk artifact does not match the expected file format."""


class ParseError(FormatError):
    """A malformed row or value; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaVersionError(FormatError):
    """A session/report file was written with an unsupported schema version."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"unsupported schema version {found!r} (expected {expected!r})")
        self.expected = expected
        self.found = found

"""Exception types shared by the simulation, entropy and CLI layers."""
from typing import Optional


class QrngError(Exception):
    """Base class for every error raised by this package."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def one_line(self) -> str:
        message = str(self).replace('"', "'").replace("\n", " ")
        return f'error kind={type(self).__name__} field={self.field or "-"} message="{message}"'


class DomainError(QrngError, ValueError):
    """A numeric argument lies outside the domain of the model."""


class PreconditionError(QrngError, ValueError):
    """An input object violates an invariant the operation relies on."""


class EmptyTraceError(QrngError, ValueError):
    """A trace, histogram or bit sequence is empty."""


class DegenerateTraceError(QrngError, ValueError):
    """A trace has too few distinct values or zero variance."""


class ConfigError(QrngError, ValueError):
    """An experiment config is missing a key or holds a malformed value."""


class FormatError(QrngError, ValueError):
    """A data file does not follow its documented format."""

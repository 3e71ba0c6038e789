"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CascadeError(Exception):
    """Base class for all package errors."""


class ValidationError(CascadeError, ValueError):
    pass


class BatchParseError(ValidationError):
    def __init__(self, path, lineno: int, reason: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: malformed record: {reason}")


class MissingColumnError(ValidationError, KeyError):
    def __init__(self, record_id: str, column: str):
        self.record_id = record_id
        self.column = column
        super().__init__(f"record {record_id!r} is missing column {column!r}")

    def __str__(self) -> str:
        return self.args[0]


class DomainError(CascadeError, ValueError):
    """An argument lies outside the domain of a numeric routine."""


class ConfigError(CascadeError):
    pass


class EndpointError(CascadeError):
    """A remote call failed after exhausting its retries."""

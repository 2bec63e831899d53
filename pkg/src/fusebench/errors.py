"""Exception types shared across the toolkit.

All of them derive from ``FusebenchError`` so the CLI can map the whole family
to the "validation" exit code, while I/O problems surface as ``OSError``.
"""

from __future__ import annotations


class FusebenchError(Exception):
    """Base class for toolkit errors."""


class ParseError(FusebenchError, ValueError):
    """A file could not be parsed; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(FusebenchError, ValueError):
    """A value violates a data-model invariant (non-finite score, label mismatch...)."""


class ConsistencyError(FusebenchError, ValueError):
    """Several inputs disagree with each other (labels across sources, missing sources)."""


class DomainError(FusebenchError, ValueError):
    """An operation was called outside its mathematical domain."""


class DegenerateError(DomainError):
    """Input is degenerate for the operation (constant scores, single class)."""


class UnknownFilterError(FusebenchError, KeyError):
    """Requested filter name does not exist in a table."""

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""

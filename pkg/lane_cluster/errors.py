"""
Exception hierarchy for lane-cluster.

Every error raised on purpose by the library derives from LaneClusterError.
The CLI maps the two families onto process exit codes:

- ValidationError (and subclasses) -> exit 1
- NumericalError                   -> exit 2
"""

from __future__ import annotations

from collections.abc import Sequence


class LaneClusterError(Exception):
    """Base class for all lane-cluster errors."""

    exit_code = 1


class ValidationError(LaneClusterError, ValueError):
    """A precondition or domain invariant was violated by the caller."""

    exit_code = 1


class SchemaError(ValidationError):
    """A scene/graph/label file does not match the expected format."""

    def __init__(
        self,
        message: str,
        *,
        field: str | None = None,
        version: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        self.field = field
        self.version = version
        self.line = line
        self.column = column
        parts = [message]
        if field is not None:
            parts.append(f"field={field}")
        if line is not None:
            parts.append(f"line={line} column={column}")
        if version is not None:
            parts.append(f"format version {version}")
        super().__init__(" | ".join(parts))


class ConfigError(ValidationError):
    """A settings file could not be parsed or contains unknown keys."""


class NumericalError(LaneClusterError, ArithmeticError):
    """A numerical procedure failed (underflow, divergence)."""

    exit_code = 2

    def __init__(self, message: str, trace: Sequence[float] | None = None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)

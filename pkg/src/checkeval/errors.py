"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CheckEvalError(Exception):
    """Base class for every error raised by checkeval."""


class InvalidArgumentError(CheckEvalError, ValueError):
    pass


class NotFoundError(CheckEvalError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ConflictError(CheckEvalError):
    pass


class ParseError(CheckEvalError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class EmptyChecklistError(CheckEvalError):
    pass


class UnparseableVerdictsError(CheckEvalError):
    pass


class UndefinedCorrelationError(CheckEvalError, ArithmeticError):
    pass


class ConfigurationError(CheckEvalError):
    pass


class BackendError(CheckEvalError):
    def __init__(self, message: str, *, status: int | None = None):
        self.status = status
        super().__init__(message if status is None else f"{message} (HTTP {status})")


class ReplayMissError(CheckEvalError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no cached response for request digest {digest}")


class PipelineError(CheckEvalError):
    """Wraps a failure with the record and criterion it happened on."""

    def __init__(self, record_id: str, criterion: str, cause: BaseException):
        self.record_id = record_id
        self.criterion = criterion
        self.cause = cause
        super().__init__(f"record {record_id!r}, criterion {criterion!r}: {cause}")

"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: user errors exit 1, oracle transport
failures exit 2, internal invariant violations exit 3.
"""


class DocTablesError(Exception):
    """Base class for all package errors."""


class UserError(DocTablesError):
    """Bad input from the operator: files, SQL, DDL, identifiers."""


class DocFormatError(UserError):
    """Malformed document serialization; carries the offending position."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" ({path}" + (f":{line}" if line is not None else "") + ")"
        super().__init__(message + where)


class SpanBoundsError(UserError):
    """Text span outside the document's phrase range."""


class SqlError(UserError):
    """SQL or DDL parse/resolution failure; carries a position when known."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class CatalogConflictError(UserError):
    """Duplicate table/attribute registration or conflicting doc content."""


class PromptError(UserError):
    """Prompt template rendered with a missing placeholder."""


class NotWellFormattedError(UserError):
    """Template derivation rejected an ill-formatted tree; carries the report."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class OracleUnavailableError(DocTablesError):
    """Backend transport failed after exhausting retries."""


class OracleParseError(DocTablesError):
    """Backend answered but the response could not be parsed for its family."""

    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class InternalError(DocTablesError):
    """A constructed structure violated its own invariants: a bug, not bad input."""

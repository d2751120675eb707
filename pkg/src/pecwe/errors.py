"""Exception hierarchy shared by every pecwe module."""

from __future__ import annotations


class PecweError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PecweError, ValueError):
    """Malformed identifier, CSV row or feed document."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NotPublished(PecweError):
    """The feed has no file for the requested score date."""

    def __init__(self, score_date):
        self.score_date = score_date
        super().__init__(f"no EPSS snapshot published for {score_date}")


class RateLimited(PecweError):
    def __init__(self, message: str, retry_after: float = 6.0):
        self.retry_after = retry_after
        super().__init__(message)


class TransportError(PecweError):
    pass


class SchemaError(PecweError):
    """A document does not have the expected shape or format version.

    ``reason`` is one of ``"missing"``, ``"corrupt"``, ``"version"`` or
    ``"record"`` so callers can tell an absent file from a damaged one.
    """

    def __init__(self, message: str, reason: str = "record"):
        self.reason = reason
        super().__init__(message)


class CatalogError(PecweError):
    pass


class ConflictError(PecweError):
    pass


class ChecksumError(PecweError):
    pass


class UnknownCwe(PecweError, KeyError):
    def __init__(self, cwe):
        self.cwe = cwe
        super().__init__(f"{cwe} is not a member of the catalog")

    def __str__(self) -> str:
        return self.args[0]


class TooLarge(PecweError, ValueError):
    pass


class EmptySeries(PecweError, ValueError):
    pass


class EmptySnapshot(PecweError, ValueError):
    pass


class DegenerateInput(PecweError, ValueError):
    pass


class EraGap(PecweError, ValueError):
    pass


class TooShort(PecweError, ValueError):
    pass


class MissingData(PecweError):
    pass

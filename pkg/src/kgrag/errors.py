"""Error types shared across the package."""

from __future__ import annotations


class KgragError(Exception):
    """Base class for all package errors."""


class EmptyField(KgragError):
    """A required triple field was empty after normalization."""


class UnknownId(KgragError):
    """A triple or index id does not exist."""


class BadFraction(KgragError):
    """A sampling fraction was outside [0, 1]."""


class IoFailure(KgragError):
    """A file could not be read or written."""


class CorruptFile(KgragError):
    """A persisted file failed structural validation on load."""


class DimensionMismatch(KgragError):
    """Two vectors had different lengths."""


class InconsistentDimension(KgragError):
    """An embedding client returned vectors of varying length."""


class LengthMismatch(KgragError):
    """Two parallel sequences had different lengths."""


class ClientFailure(KgragError):
    """A completion or embedding backend failed.

    Carries enough context to replay the request: the hash of the request
    text, the compiled prompt when one exists, and document coordinates when
    the failure happened during extraction.
    """

    def __init__(
        self,
        message: str,
        *,
        request_hash: str | None = None,
        prompt: str | None = None,
        doc_id: str | None = None,
        paragraph_index: int | None = None,
    ):
        super().__init__(message)
        self.request_hash = request_hash
        self.prompt = prompt
        self.doc_id = doc_id
        self.paragraph_index = paragraph_index

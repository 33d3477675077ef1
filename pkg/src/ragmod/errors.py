"""Exception hierarchy shared across the package."""


class RagmodError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RagmodError):
    """Unknown embedder/classifier id or otherwise bad configuration."""


class FormatError(RagmodError):
    """Malformed file content. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionMismatchError(RagmodError):
    """Vector dimension does not match the library manifest."""


class InvalidQueryError(RagmodError):
    """Query embedding is unusable (zero-flagged vector)."""


class InvalidInputError(RagmodError):
    """Operation input violates a precondition (e.g. empty corpus)."""


class DuplicateIdError(RagmodError):
    """Entry id already present in the library."""


class UnknownIdError(RagmodError):
    """Entry id not present in the library."""


class ResponseParseError(RagmodError):
    """Classifier response does not start with a safe/unsafe answer token."""


class ProtocolError(RagmodError):
    """External classifier reply violates the wire contract."""


class UpstreamError(RagmodError):
    """External classifier call failed; carries the raw payload when available."""

    def __init__(self, message: str, payload: str | None = None):
        super().__init__(message)
        self.payload = payload


class UndefinedMetricError(RagmodError):
    """Metric is undefined for the given inputs (e.g. AUPRC with no positives)."""

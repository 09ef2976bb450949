"""Exception types shared across the package."""


class KBResizeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(KBResizeError, ValueError):
    """Argument violates a documented precondition (shape, range, finiteness)."""


class DomainError(InvalidInputError):
    """Point lies on or outside the unit ball."""


class StaleRankingError(KBResizeError):
    """Ranking was computed for a different parent codebook."""


class DecodeError(KBResizeError):
    """Malformed binary or text input.

    ``offset`` is the byte offset where decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)

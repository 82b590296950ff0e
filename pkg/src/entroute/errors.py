"""Exception hierarchy shared by every entroute module."""
from __future__ import annotations


class EntrouteError(Exception):
    """Base class for all library errors."""


class DomainError(EntrouteError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EmptySequence(EntrouteError, ValueError):
    """An operation that needs at least one element received none."""


class MalformedTrace(EntrouteError, ValueError):
    """A trace record or trace file violates the record invariants."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class AlignmentError(EntrouteError, ValueError):
    """Two position-aligned sequences have different lengths."""


class TraceExhausted(EntrouteError, IndexError):
    """A replay backend was asked for a step beyond the recorded trace."""


class BackendError(EntrouteError):
    """Failure reported by a model backend.

    ``retryable`` tells the session runtime whether another attempt may succeed.
    """

    retryable = False

    def __init__(self, message: str, *, backend: str | None = None):
        self.backend = backend
        super().__init__(f"[{backend}] {message}" if backend else message)


class BackendUnavailable(BackendError):
    retryable = True


class BackendRejected(BackendError):
    """The provider answered but refused the request (4xx other than 408/429)."""


class LogprobsUnsupported(BackendError):
    """The provider cannot return per-token log-probabilities."""


class OutOfRange(EntrouteError, ValueError):
    """A leaderboard query falls outside the recorded time span."""


class NotReached(EntrouteError, ValueError):
    """A score series never reaches the requested threshold."""


class SessionError(EntrouteError):
    pass


class ConfigMismatch(SessionError):
    """The routing config differs from the one the checkpoint was taken under."""


class CorruptCheckpoint(SessionError):
    """Checkpoint and persisted logs are inconsistent."""

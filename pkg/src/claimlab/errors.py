"""Exception hierarchy shared across the engine.

Precondition violations raise plain ValueError; everything that can happen
at runtime against real data or real endpoints gets a named class so
callers (CLI, service) can map failures to exit codes / HTTP statuses.
"""

from __future__ import annotations


class ClaimlabError(Exception):
    """Base class for engine errors."""


class SchemaError(ClaimlabError):
    """A dataset/config record violates its declared schema."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class ConfigurationError(ClaimlabError):
    """Invalid or missing configuration (weights file, endpoints, index)."""

    def __init__(self, message: str, *, field: str | None = None):
        self.field = field
        super().__init__(message)


class GatewayError(ClaimlabError):
    """Base for chat-endpoint client failures."""


class TransportError(GatewayError):
    """Connection-level failure that persisted through retries."""


class GatewayTimeout(GatewayError):
    """Request exceeded the endpoint's timeout through all retries."""


class UpstreamError(GatewayError):
    """Endpoint answered with a non-2xx status through all retries."""

    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"upstream status {status}" + (f": {message}" if message else ""))


class GroupIncomplete(GatewayError):
    """A k-sample group came back partially; carries successes and per-slot errors."""

    def __init__(self, completions: list[str | None], errors: list[Exception | None]):
        self.completions = completions
        self.errors = errors
        n_ok = sum(1 for c in completions if c is not None)
        super().__init__(f"group incomplete: {n_ok}/{len(completions)} slots succeeded")


class RetrievalError(ClaimlabError):
    """Search provider failure (quota, transport) after retries."""


class CacheMiss(RetrievalError):
    """Cache-only retrieval was asked for an uncached query."""


class NormalizationError(ClaimlabError):
    """A verifier backend returned a score outside [0, 1]."""


class JudgeParseError(ClaimlabError):
    """Checklist judge output failed structural validation.

    Instances are values as well as exceptions: the checklist reward accepts
    one in place of a judgment list and prices the completion at zero.
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)

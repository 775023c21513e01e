"""Typed error envelopes and the retry-budget ledger.

Every tool failure leaves the server as an ``ErrorEnvelope``. Layer code
raises ``ToolError``; the dispatcher turns it into an envelope with
``make_error`` after charging the ``RetryLedger``.
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)


class ErrorKind(str, Enum):
    BLOCKED = "blocked"
    STALE_PRECONDITION = "stale_precondition"
    WRITE_CORRUPTION = "write_corruption"
    QUOTA_EXCEEDED = "quota_exceeded"
    POLICY_VIOLATION = "policy_violation"


class ReasonHint(str, Enum):
    CONTENT_FILTER = "content_filter"
    SIZE_LIMIT = "size_limit"
    ENCODING = "encoding"
    PERMISSION = "permission"
    NETWORK = "network"
    UNKNOWN = "unknown"


class SuggestedAction(str, Enum):
    REDACT = "redact"
    CHUNK = "chunk"
    SCRATCH_PUT = "scratch_put"
    REFRESH_PRECONDITION = "refresh_precondition"
    RETRY_WRITE = "retry_write"
    REDUCE_SIZE = "reduce_size"
    FIX_PATH = "fix_path"
    FIX_ARGS = "fix_args"
    SCRATCH_REF = "scratch_ref"


DEFAULT_ACTIONS = {
    ErrorKind.BLOCKED: SuggestedAction.REDACT,
    ErrorKind.STALE_PRECONDITION: SuggestedAction.REFRESH_PRECONDITION,
    ErrorKind.WRITE_CORRUPTION: SuggestedAction.RETRY_WRITE,
    ErrorKind.QUOTA_EXCEEDED: SuggestedAction.CHUNK,
    ErrorKind.POLICY_VIOLATION: SuggestedAction.FIX_PATH,
}


class ErrorEnvelope(BaseModel):
    """Uniform failure record returned by every tool"""

    model_config = ConfigDict(extra="forbid", use_enum_values=True)

    ok: Literal[False] = False
    error: ErrorKind
    reason_hint: ReasonHint
    detected_patterns: List[str] = Field(default_factory=list)
    suggested_action: SuggestedAction
    retry_budget: int = Field(..., ge=0)
    retriable: bool
    message: str = ""
    context: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _content_filter_is_final(self) -> "ErrorEnvelope":
        if self.reason_hint == ReasonHint.CONTENT_FILTER.value and self.retriable:
            raise ValueError("content_filter envelopes are never retriable")
        if self.retry_budget == 0 and self.retriable:
            raise ValueError("an exhausted retry budget is never retriable")
        return self


class ToolError(Exception):
    """Raised by layer code; converted to an ErrorEnvelope at the dispatch boundary"""

    def __init__(
        self,
        kind: ErrorKind,
        reason_hint: ReasonHint,
        message: str,
        *,
        detected_patterns: Sequence[str] = (),
        suggested_action: Optional[SuggestedAction] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.kind = kind
        self.reason_hint = reason_hint
        self.message = message
        self.detected_patterns = list(detected_patterns)
        self.suggested_action = suggested_action or DEFAULT_ACTIONS[kind]
        self.context = dict(context or {})


def is_retriable(reason_hint: ReasonHint, retry_budget: int) -> bool:
    return reason_hint is not ReasonHint.CONTENT_FILTER and retry_budget > 0


def make_error(
    kind: ErrorKind,
    reason_hint: ReasonHint,
    detected_patterns: Sequence[str] = (),
    suggested_action: Optional[SuggestedAction] = None,
    context: Optional[Dict[str, Any]] = None,
    *,
    retry_budget: int = 0,
    message: str = "",
) -> ErrorEnvelope:
    """Build an envelope; retriable is derived, never passed in"""
    budget = max(0, retry_budget)
    return ErrorEnvelope(
        error=kind,
        reason_hint=reason_hint,
        detected_patterns=list(detected_patterns),
        suggested_action=suggested_action or DEFAULT_ACTIONS[kind],
        retry_budget=budget,
        retriable=is_retriable(reason_hint, budget),
        message=message,
        context=dict(context or {}),
    )


def error_from_exception(exc: ToolError, retry_budget: int) -> ErrorEnvelope:
    return make_error(
        exc.kind,
        exc.reason_hint,
        exc.detected_patterns,
        exc.suggested_action,
        exc.context,
        retry_budget=retry_budget,
        message=exc.message,
    )


RetryKey = Tuple[str, str, str]


class RetryLedger:
    """Process-lifetime retry budgets keyed by (tool, path, content hash).

    Only failures are charged; a call that succeeds clears its key. Nothing
    is persisted: a restarted server, like a fresh agent, starts every key
    with the full budget.
    """

    def __init__(self):
        self._budgets: Dict[RetryKey, int] = {}

    def charge(self, key: RetryKey, default_budget: int, caller_budget: Optional[int] = None) -> int:
        """Charge one failed attempt and return the budget left for the key"""
        tool, path, _ = key
        # New content for the same target starts a fresh budget
        for stale in [k for k in self._budgets if k[0] == tool and k[1] == path and k != key]:
            del self._budgets[stale]

        previous = self._budgets.get(key)
        remaining = max(0, default_budget) if previous is None else max(0, previous - 1)
        if caller_budget is not None:
            remaining = min(remaining, max(0, caller_budget - 1))
        self._budgets[key] = remaining
        logger.debug(f"Retry budget for {tool}:{path} now {remaining}")
        return remaining

    def clear(self, key: RetryKey) -> None:
        if self._budgets.pop(key, None) is not None:
            logger.debug(f"Retry budget for {key[0]}:{key[1]} cleared after success")

from .context import WorkspaceContext
from .envelope import ErrorEnvelope, ToolError, make_error
from .risk import risk_score

__all__ = ["WorkspaceContext", "ErrorEnvelope", "ToolError", "make_error", "risk_score"]

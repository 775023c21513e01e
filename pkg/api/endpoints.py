import base64
import binascii
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Type

from pydantic import BaseModel, ConfigDict, Field, model_validator

from layers.atomic import safe_write
from layers.chunks import chunk_append, chunk_compose, chunk_preview, chunk_status, chunk_write
from layers.envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from layers.handoff import HandoffModel, build_envelope, handoff_read, handoff_write
from layers.models import ComposeMode, ValidationFormat, WriteMode
from layers.risk import risk_score
from layers.scratch import DEFAULT_CONTENT_TYPE, scratch_get, scratch_put, scratch_ref
from layers.validate import validate

logger = logging.getLogger(__name__)

Handler = Callable[[Any, BaseModel], Dict[str, Any]]


class ToolArgs(BaseModel):
    model_config = ConfigDict(extra="forbid")

    retry_budget: Optional[int] = Field(
        None, ge=1, description="Optional cap on identical retries for this call"
    )


class RiskScoreRequest(ToolArgs):
    content: str = Field(..., description="Draft content to score before writing")
    path: Optional[str] = Field(None, description="Intended target path, used only for logging")


class PayloadArgs(ToolArgs):
    """Exactly one of content (UTF-8 text) or content_base64 (raw bytes)"""

    content: Optional[str] = Field(None, description="UTF-8 text payload")
    content_base64: Optional[str] = Field(None, description="Binary payload, base64 encoded")

    @model_validator(mode="after")
    def _one_payload(self) -> "PayloadArgs":
        if (self.content is None) == (self.content_base64 is None):
            raise ValueError("provide exactly one of content or content_base64")
        return self

    def payload(self) -> bytes:
        if self.content is not None:
            return self.content.encode("utf-8")
        try:
            return base64.b64decode(self.content_base64, validate=True)
        except (binascii.Error, ValueError) as e:
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.ENCODING,
                "content_base64 is not valid base64",
                suggested_action=SuggestedAction.FIX_ARGS,
                context={"detail": str(e)},
            ) from e


class SafeWriteRequest(PayloadArgs):
    path: str = Field(..., description="Workspace-relative target path")
    mode: WriteMode = Field(WriteMode.CREATE, description="create, overwrite or append")
    expected_prev_sha256: Optional[str] = Field(
        None, description="Hash last observed for the target, or 'absent'"
    )


class ChunkWriteRequest(ToolArgs):
    session_id: str
    index: int = Field(..., ge=1, description="1-based chunk index")
    content: str
    total_expected: Optional[int] = Field(None, ge=1)


class ChunkAppendRequest(ToolArgs):
    session_id: str
    content: str
    total_expected: Optional[int] = Field(None, ge=1)


class ChunkComposeRequest(ToolArgs):
    session_id: str
    path: str = Field(..., description="Workspace-relative target path")
    mode: ComposeMode = ComposeMode.CREATE
    cleanup: bool = Field(False, description="Remove the session directory after composing")


class SessionRequest(ToolArgs):
    session_id: str


class ScratchPutRequest(PayloadArgs):
    label: str
    content_type: str = DEFAULT_CONTENT_TYPE


class ScratchRefRequest(ToolArgs):
    sha256: Optional[str] = None
    label: Optional[str] = None


class ScratchGetRequest(ToolArgs):
    sha256: str


class HandoffWriteRequest(ToolArgs, HandoffModel):
    body: str = Field("", description="Markdown written after the front matter")
    archive: bool = Field(True, description="Archive an existing HANDOFF.md first")


class ValidateRequest(ToolArgs):
    content: str
    format: Optional[ValidationFormat] = Field(None, description="Detected when omitted")
    path: Optional[str] = Field(None, description="Path hint for format detection")


class JournalTailRequest(ToolArgs):
    n: int = Field(20, ge=0, description="Number of most recent rows")


class EmptyRequest(ToolArgs):
    pass


@dataclass
class ToolDescriptor:
    name: str
    description: str
    args_model: Type[ToolArgs]
    handler: Handler

    @property
    def input_schema(self) -> Dict[str, Any]:
        return self.args_model.model_json_schema()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "inputSchema": self.input_schema,
        }


class ToolRouter:
    """Registry of rw.* tools, populated with the ``tool`` decorator"""

    def __init__(self):
        self._tools: Dict[str, ToolDescriptor] = {}

    def tool(self, name: str, args_model: Type[ToolArgs], description: str):
        def register(handler: Handler) -> Handler:
            if name in self._tools:
                raise ValueError(f"Duplicate tool name: {name}")
            self._tools[name] = ToolDescriptor(name, description, args_model, handler)
            return handler
        return register

    def get(self, name: str) -> Optional[ToolDescriptor]:
        return self._tools.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def list_tools(self) -> List[ToolDescriptor]:
        return list(self._tools.values())


router = ToolRouter()


@router.tool("rw.risk_score", RiskScoreRequest,
             "Score draft content for secrets, PII and size hazards before writing it.")
def risk_score_tool(ctx, request: RiskScoreRequest) -> Dict[str, Any]:
    report = risk_score(request.content, ctx.policy, request.path)
    return {"ok": True, **report.to_dict()}


@router.tool("rw.safe_write", SafeWriteRequest,
             "Atomically write a file inside the workspace with an optional hash precondition.")
def safe_write_tool(ctx, request: SafeWriteRequest) -> Dict[str, Any]:
    receipt = safe_write(
        ctx,
        request.path,
        request.payload(),
        request.mode,
        request.expected_prev_sha256,
    )
    return receipt.to_dict()


@router.tool("rw.chunk_write", ChunkWriteRequest,
             "Persist one numbered chunk of a large file; retrying the same index is safe.")
def chunk_write_tool(ctx, request: ChunkWriteRequest) -> Dict[str, Any]:
    return chunk_write(ctx, request.session_id, request.index, request.content, request.total_expected)


@router.tool("rw.chunk_append", ChunkAppendRequest,
             "Persist the next chunk of a session, numbered after the highest existing index.")
def chunk_append_tool(ctx, request: ChunkAppendRequest) -> Dict[str, Any]:
    return chunk_append(ctx, request.session_id, request.content, request.total_expected)


@router.tool("rw.chunk_compose", ChunkComposeRequest,
             "Concatenate a contiguous chunk session into its target file.")
def chunk_compose_tool(ctx, request: ChunkComposeRequest) -> Dict[str, Any]:
    return chunk_compose(ctx, request.session_id, request.path, request.mode, request.cleanup)


@router.tool("rw.chunk_status", SessionRequest,
             "Report the chunks present on disk for a session, including gaps.")
def chunk_status_tool(ctx, request: SessionRequest) -> Dict[str, Any]:
    return chunk_status(ctx, request.session_id)


@router.tool("rw.chunk_preview", SessionRequest,
             "Dry-run a compose: return the would-be file content without writing.")
def chunk_preview_tool(ctx, request: SessionRequest) -> Dict[str, Any]:
    return chunk_preview(ctx, request.session_id)


@router.tool("rw.scratch_put", ScratchPutRequest,
             "Deposit content in the hash-addressed scratchpad outside the workspace tree.")
def scratch_put_tool(ctx, request: ScratchPutRequest) -> Dict[str, Any]:
    return scratch_put(ctx, request.payload(), request.label, request.content_type)


@router.tool("rw.scratch_ref", ScratchRefRequest,
             "Look up scratchpad metadata by hash or label without retrieving content.")
def scratch_ref_tool(ctx, request: ScratchRefRequest) -> Dict[str, Any]:
    return scratch_ref(ctx, request.sha256, request.label)


@router.tool("rw.scratch_get", ScratchGetRequest,
             "Retrieve scratchpad content by hash unless reads are disabled.")
def scratch_get_tool(ctx, request: ScratchGetRequest) -> Dict[str, Any]:
    return scratch_get(ctx, request.sha256)


@router.tool("rw.handoff_write", HandoffWriteRequest,
             "Write HANDOFF.md with task state, next steps and per-file hashes.")
def handoff_write_tool(ctx, request: HandoffWriteRequest) -> Dict[str, Any]:
    envelope = build_envelope(ctx, request, request.body)
    return handoff_write(ctx, envelope, request.archive)


@router.tool("rw.handoff_read", EmptyRequest,
             "Read HANDOFF.md and report files whose hashes drifted since it was written.")
def handoff_read_tool(ctx, request: EmptyRequest) -> Dict[str, Any]:
    return handoff_read(ctx)


@router.tool("rw.validate", ValidateRequest,
             "Syntax-check LaTeX, JSON, Python or YAML content before writing it.")
def validate_tool(ctx, request: ValidateRequest) -> Dict[str, Any]:
    report = validate(request.content, request.format, request.path)
    return {"ok": True, **report.to_dict()}


@router.tool("rw.analytics", EmptyRequest,
             "Summarize the write journal: totals, per-path counts, chunk sessions and velocity.")
def analytics_tool(ctx, request: EmptyRequest) -> Dict[str, Any]:
    return {"ok": True, **ctx.journal.analytics().to_dict()}


@router.tool("rw.journal_tail", JournalTailRequest,
             "Return the most recent journal rows.")
def journal_tail_tool(ctx, request: JournalTailRequest) -> Dict[str, Any]:
    return ctx.journal.tail(request.n)


@router.tool("rw.workspace_info", EmptyRequest,
             "Report the workspace root, policy summary and environment gates.")
def workspace_info_tool(ctx, request: EmptyRequest) -> Dict[str, Any]:
    return ctx.info()

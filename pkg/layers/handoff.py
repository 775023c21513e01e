"""Task-continuity envelopes stored as HANDOFF.md at the workspace root."""

import logging
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .atomic import four_phase_write, hash_file, safe_write
from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .frontmatter import FrontMatterError, fm_dumps, fm_parse
from .models import (
    DriftWarning,
    FileState,
    HandoffEnvelope,
    HandoffStatus,
    JournalKind,
    WriteMode,
    utc_now,
)
from .workspace import relative_to_root, resolve_path

logger = logging.getLogger(__name__)

HANDOFF_FILE = "HANDOFF.md"
HANDOFFS_DIR = "handoffs"
MISSING = "missing"
ARCHIVE_STAMP = "%Y%m%dT%H%M%SZ"


class FileStateModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str = Field(..., min_length=1)
    sha256: Optional[str] = Field(None, pattern=r"^[0-9a-f]{64}$")


class HandoffModel(BaseModel):
    """Front matter schema shared by rw.handoff_write arguments and HANDOFF.md parsing"""

    model_config = ConfigDict(extra="forbid")

    task_id: str = Field(..., pattern=r"^[A-Za-z0-9._-]{1,128}$")
    status: HandoffStatus
    agent: Optional[str] = None
    summary: str
    next_steps: List[str] = Field(default_factory=list)
    last_good_state: List[FileStateModel] = Field(default_factory=list)


def _current_hash(ctx, path: str) -> str:
    try:
        target = resolve_path(ctx.root, path)
    except ToolError:
        return MISSING
    return hash_file(target) if target.is_file() else MISSING


def build_envelope(ctx, model: HandoffModel, body: str = "") -> HandoffEnvelope:
    """Resolve every listed path; missing digests are taken from disk"""
    states = []
    for item in model.last_good_state:
        target = resolve_path(ctx.root, item.path)
        relative = relative_to_root(ctx.root, target)
        digest = item.sha256
        if digest is None:
            if not target.is_file():
                raise ToolError(
                    ErrorKind.POLICY_VIOLATION,
                    ReasonHint.UNKNOWN,
                    f"Cannot hash {relative}: file does not exist",
                    suggested_action=SuggestedAction.FIX_ARGS,
                    context={"path": relative},
                )
            digest = hash_file(target)
        states.append(FileState(path=relative, sha256=digest))

    return HandoffEnvelope(
        task_id=model.task_id,
        status=model.status,
        summary=model.summary,
        agent=model.agent,
        next_steps=list(model.next_steps),
        last_good_state=states,
        body=body,
    )


def _archive(ctx, current: bytes) -> str:
    directory = ctx.state_dir / HANDOFFS_DIR
    directory.mkdir(parents=True, exist_ok=True)
    stamp = utc_now().strftime(ARCHIVE_STAMP)
    target = directory / f"{stamp}-{HANDOFF_FILE}"
    n = 1
    while target.exists():
        target = directory / f"{stamp}-{n}-{HANDOFF_FILE}"
        n += 1
    four_phase_write(target, current, ctx.crash_hook)
    return relative_to_root(ctx.root, target)


def handoff_write(ctx, envelope: HandoffEnvelope, archive: bool = True) -> Dict[str, Any]:
    target = resolve_path(ctx.root, HANDOFF_FILE)
    archived = None
    if archive and target.is_file():
        archived = _archive(ctx, target.read_bytes())
        logger.info(f"Archived previous handoff to {archived}")

    document = fm_dumps(envelope.body, envelope.front_matter())
    receipt = safe_write(
        ctx,
        HANDOFF_FILE,
        document.encode("utf-8"),
        WriteMode.OVERWRITE,
        kind=JournalKind.HANDOFF,
    )
    result = receipt.to_dict()
    result.update({"task_id": envelope.task_id, "archived_to": archived})
    return result


def _parse_error(message: str, line: Optional[int] = None, **context) -> ToolError:
    return ToolError(
        ErrorKind.POLICY_VIOLATION,
        ReasonHint.ENCODING,
        f"HANDOFF.md is unparseable: {message}",
        suggested_action=SuggestedAction.FIX_ARGS,
        context={"yaml_error": message, "line": line, **context},
    )


def parse_handoff(text: str) -> HandoffEnvelope:
    try:
        body, meta = fm_parse(text)
    except FrontMatterError as e:
        raise _parse_error(str(e), e.line) from e

    try:
        model = HandoffModel.model_validate(meta)
    except ValidationError as e:
        errors = [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
        raise _parse_error("front matter does not match the handoff schema", errors=errors) from e

    return HandoffEnvelope(
        task_id=model.task_id,
        status=model.status,
        summary=model.summary,
        agent=model.agent,
        next_steps=list(model.next_steps),
        last_good_state=[FileState(path=s.path, sha256=s.sha256 or "") for s in model.last_good_state],
        body=body,
    )


def drift_check(ctx, envelope: HandoffEnvelope) -> List[DriftWarning]:
    warnings = []
    for state in envelope.last_good_state:
        current = _current_hash(ctx, state.path)
        if current != state.sha256:
            warnings.append(DriftWarning(path=state.path, recorded_sha256=state.sha256, current_sha256=current))
    return warnings


def handoff_read(ctx) -> Dict[str, Any]:
    """Load HANDOFF.md and re-hash every listed file; drift never blocks"""
    target = resolve_path(ctx.root, HANDOFF_FILE)
    if not target.is_file():
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            "No HANDOFF.md in the workspace",
            suggested_action=SuggestedAction.FIX_PATH,
            context={"path": HANDOFF_FILE},
        )
    try:
        text = target.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise _parse_error(f"not valid UTF-8 ({e.reason})") from e

    envelope = parse_handoff(text)
    drift = drift_check(ctx, envelope)
    if drift:
        logger.warning(f"Handoff drift on {len(drift)} file(s)")
    return {
        "ok": True,
        "envelope": envelope.to_dict(),
        "drift": [d.to_dict() for d in drift],
    }

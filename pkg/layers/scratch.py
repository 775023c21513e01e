"""Content-addressed scratchpad.

Blobs live under ``.resilient_write/scratch/<sha256>.bin`` and are never
copied into the workspace tree. ``index.jsonl`` accumulates one metadata
line per deposit, so several labels can alias the same blob.
"""

import base64
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

from .atomic import four_phase_write, hash_bytes, hash_file
from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .journal import append_jsonl, read_jsonl
from .models import JournalKind, ScratchEntry, iso_timestamp
from .workspace import relative_to_root

logger = logging.getLogger(__name__)

SCRATCH_DIR = "scratch"
INDEX_FILE = "index.jsonl"
DEFAULT_CONTENT_TYPE = "application/octet-stream"
_SHA_RE = re.compile(r"^[0-9a-f]{64}$")


def _check_sha(sha256: str) -> str:
    digest = (sha256 or "").strip().lower()
    if not _SHA_RE.match(digest):
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            "sha256 must be 64 hex characters",
            suggested_action=SuggestedAction.FIX_ARGS,
            context={"sha256": sha256},
        )
    return digest


class ScratchStore:
    def __init__(self, ctx):
        self.ctx = ctx
        self.root = ctx.state_dir / SCRATCH_DIR
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / INDEX_FILE

    def blob_path(self, sha256: str) -> Path:
        return self.root / f"{sha256}.bin"

    def put(self, content: bytes, label: str, content_type: str = DEFAULT_CONTENT_TYPE) -> Dict[str, Any]:
        if not content:
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                "Scratch content must not be empty",
                suggested_action=SuggestedAction.FIX_ARGS,
            )
        digest = hash_bytes(content)
        path = self.blob_path(digest)

        deduplicated = path.is_file() and hash_file(path) == digest
        if not deduplicated:
            if path.is_file():
                logger.warning(f"Replacing tampered scratch blob {digest[:12]}")
            four_phase_write(path, content, self.ctx.crash_hook)

        entry = ScratchEntry(
            sha256=digest,
            label=label,
            content_type=content_type or DEFAULT_CONTENT_TYPE,
            ts=iso_timestamp(),
            bytes=len(content),
        )
        append_jsonl(self.index_path, entry.to_dict())
        seq = self.ctx.journal.record(
            JournalKind.SCRATCH,
            relative_to_root(self.ctx.root, path),
            digest,
            len(content),
            "dedup" if deduplicated else "create",
        )
        logger.info(f"Scratch deposit {digest[:12]} label={label!r} dedup={deduplicated}")
        return {
            "ok": True,
            "sha256": digest,
            "deduplicated": deduplicated,
            "bytes": len(content),
            "journal_seq": seq,
        }

    def entries(self) -> List[ScratchEntry]:
        records, warnings = read_jsonl(self.index_path)
        for warning in warnings:
            logger.warning(f"Scratch index: {warning}")
        entries = []
        for record in records:
            try:
                entries.append(ScratchEntry(**record))
            except TypeError:
                logger.warning("Scratch index: malformed entry skipped")
        return entries

    def ref(self, sha256: Optional[str] = None, label: Optional[str] = None) -> Dict[str, Any]:
        """Metadata lookup by hash or label; content bytes are never returned"""
        if sha256 is None and label is None:
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                "Provide sha256 or label",
                suggested_action=SuggestedAction.FIX_ARGS,
            )
        digest = _check_sha(sha256) if sha256 is not None else None
        matches = [
            e for e in self.entries()
            if (digest is None or e.sha256 == digest) and (label is None or e.label == label)
        ]
        return {"ok": True, "entries": [e.to_dict() for e in matches]}

    def get(self, sha256: str) -> Dict[str, Any]:
        digest = _check_sha(sha256)
        if self.ctx.settings.scratch_get_disabled:
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.PERMISSION,
                "Scratch reads are disabled: the scratchpad is write-only (deposit-box mode)",
                suggested_action=SuggestedAction.SCRATCH_REF,
                context={
                    "gate": "RW_SCRATCH_DISABLE_GET",
                    "hint": "use rw.scratch_ref to confirm a deposit by metadata",
                },
            )

        path = self.blob_path(digest)
        if not path.is_file():
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                f"No scratch blob for {digest}",
                suggested_action=SuggestedAction.SCRATCH_REF,
                context={"sha256": digest},
            )

        data = path.read_bytes()
        actual = hash_bytes(data)
        if actual != digest:
            raise ToolError(
                ErrorKind.WRITE_CORRUPTION,
                ReasonHint.UNKNOWN,
                f"Scratch blob {digest[:12]} fails its hash check",
                suggested_action=SuggestedAction.SCRATCH_PUT,
                context={"expected_sha256": digest, "actual_sha256": actual},
            )

        result: Dict[str, Any] = {
            "ok": True,
            "sha256": digest,
            "bytes": len(data),
            "content_base64": base64.b64encode(data).decode("ascii"),
        }
        try:
            result["content"] = data.decode("utf-8")
        except UnicodeDecodeError:
            pass
        return result


def scratch_put(ctx, content: bytes, label: str, content_type: str = DEFAULT_CONTENT_TYPE) -> Dict[str, Any]:
    return ScratchStore(ctx).put(content, label, content_type)


def scratch_ref(ctx, sha256: Optional[str] = None, label: Optional[str] = None) -> Dict[str, Any]:
    return ScratchStore(ctx).ref(sha256, label)


def scratch_get(ctx, sha256: str) -> Dict[str, Any]:
    return ScratchStore(ctx).get(sha256)

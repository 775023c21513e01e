"""Resumable chunked composition.

Chunk files under .resilient_write/chunks/<session>/part-NNN.txt are the
source of truth. manifest.json is a derived cache, written atomically and
never journaled.
"""

import json
import logging
import re
import shutil
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .atomic import four_phase_write, hash_bytes, safe_write
from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .models import (
    ChunkManifest,
    ComposeMode,
    JournalKind,
    WriteMode,
    iso_timestamp,
    parse_timestamp,
    utc_now,
)
from .workspace import relative_to_root

logger = logging.getLogger(__name__)

CHUNKS_DIR = "chunks"
MANIFEST_FILE = "manifest.json"
SESSION_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,64}$")
PART_RE = re.compile(r"^part-(\d+)\.txt$")


def part_name(index: int) -> str:
    return f"part-{index:03d}.txt"


def _check_session_id(session_id: str) -> None:
    if not SESSION_ID_RE.match(session_id or "") or session_id in (".", ".."):
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.PERMISSION,
            f"Unsafe session id: {session_id!r}",
            suggested_action=SuggestedAction.FIX_ARGS,
            context={"session_id": session_id, "allowed": SESSION_ID_RE.pattern},
        )


def session_dir(ctx, session_id: str) -> Path:
    _check_session_id(session_id)
    return ctx.state_dir / CHUNKS_DIR / session_id


def _chunk_files(directory: Path) -> Dict[int, Path]:
    files: Dict[int, Path] = {}
    if not directory.is_dir():
        return files
    for entry in directory.iterdir():
        match = PART_RE.match(entry.name)
        if match and entry.is_file():
            index = int(match.group(1))
            if index >= 1:
                files[index] = entry
    return dict(sorted(files.items()))


def _read_manifest(directory: Path) -> Optional[ChunkManifest]:
    path = directory / MANIFEST_FILE
    if not path.is_file():
        return None
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return ChunkManifest(
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            total_expected=data.get("total_expected"),
        )
    except (OSError, ValueError, KeyError, TypeError) as e:
        logger.warning(f"Ignoring unreadable manifest in {directory.name}: {e}")
        return None


def _write_manifest(ctx, directory: Path, manifest: ChunkManifest) -> None:
    data = json.dumps(manifest.to_dict(), sort_keys=True, indent=2).encode("utf-8")
    four_phase_write(directory / MANIFEST_FILE, data, ctx.crash_hook)


def _gaps(indices: List[int]) -> List[int]:
    if not indices:
        return []
    present = set(indices)
    return [i for i in range(1, max(indices) + 1) if i not in present]


def _reconcile_manifest(ctx, directory: Path, total_expected: Optional[int]) -> ChunkManifest:
    now = iso_timestamp()
    manifest = _read_manifest(directory)
    if manifest is None:
        manifest = ChunkManifest(created_at=now, updated_at=now, total_expected=total_expected)
    else:
        if (
            total_expected is not None
            and manifest.total_expected is not None
            and manifest.total_expected != total_expected
        ):
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                "total_expected conflicts with the session manifest",
                suggested_action=SuggestedAction.FIX_ARGS,
                context={
                    "manifest_total_expected": manifest.total_expected,
                    "requested_total_expected": total_expected,
                },
            )
        if total_expected is not None:
            manifest.total_expected = total_expected
        manifest.updated_at = now
    return manifest


def chunk_write(
    ctx,
    session_id: str,
    index: int,
    content: str,
    total_expected: Optional[int] = None,
) -> Dict[str, Any]:
    """Persist one chunk; retrying the same index is idempotent"""
    if index < 1:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            "Chunk indices start at 1",
            suggested_action=SuggestedAction.FIX_ARGS,
            context={"index": index},
        )
    directory = session_dir(ctx, session_id)
    manifest = _reconcile_manifest(ctx, directory, total_expected)

    target = directory / part_name(index)
    receipt = safe_write(
        ctx,
        relative_to_root(ctx.root, target),
        content.encode("utf-8"),
        WriteMode.OVERWRITE,
        kind=JournalKind.CHUNK,
        session=session_id,
        internal=True,
    )
    _write_manifest(ctx, directory, manifest)

    result = receipt.to_dict()
    result.update({
        "session_id": session_id,
        "index": index,
        "total_expected": manifest.total_expected,
    })
    return result


def chunk_append(ctx, session_id: str, content: str, total_expected: Optional[int] = None) -> Dict[str, Any]:
    """Write the next chunk after the highest existing index"""
    files = _chunk_files(session_dir(ctx, session_id))
    index = max(files) + 1 if files else 1
    return chunk_write(ctx, session_id, index, content, total_expected)


def chunk_status(ctx, session_id: str) -> Dict[str, Any]:
    """Status derived from the directory listing, not the manifest"""
    directory = session_dir(ctx, session_id)
    files = _chunk_files(directory)
    manifest = _read_manifest(directory)
    if not files and manifest is None:
        return {
            "ok": True,
            "session_id": session_id,
            "exists": False,
            "indices": [],
            "gaps": [],
            "total_expected": None,
            "chunk_bytes": {},
            "total_bytes": 0,
            "manifest": None,
            "age_seconds": None,
            "complete": False,
        }

    indices = list(files)
    sizes = {str(i): p.stat().st_size for i, p in files.items()}
    gaps = _gaps(indices)
    total_expected = manifest.total_expected if manifest else None

    if manifest is not None:
        created = parse_timestamp(manifest.created_at)
    else:
        oldest = min(p.stat().st_mtime for p in files.values())
        created = datetime.fromtimestamp(oldest, tz=timezone.utc)
    age = max(0.0, (utc_now() - created).total_seconds())

    complete = bool(indices) and not gaps and (total_expected is None or len(indices) == total_expected)
    return {
        "ok": True,
        "session_id": session_id,
        "exists": True,
        "indices": indices,
        "gaps": gaps,
        "total_expected": total_expected,
        "chunk_bytes": sizes,
        "total_bytes": sum(sizes.values()),
        "manifest": manifest.to_dict() if manifest else None,
        "age_seconds": age,
        "complete": complete,
    }


def _assemble(ctx, session_id: str) -> Tuple[bytes, List[int]]:
    """Run the contiguity and total_expected checks and concatenate chunks"""
    directory = session_dir(ctx, session_id)
    files = _chunk_files(directory)
    if not files:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            f"Session {session_id} has no chunks",
            suggested_action=SuggestedAction.FIX_ARGS,
            context={"session_id": session_id},
        )

    indices = list(files)
    gaps = _gaps(indices)
    if gaps:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            f"Session {session_id} is missing chunk(s) {gaps}",
            suggested_action=SuggestedAction.RETRY_WRITE,
            context={"session_id": session_id, "indices": indices, "gaps": gaps},
        )

    manifest = _read_manifest(directory)
    if manifest is not None and manifest.total_expected is not None and len(indices) != manifest.total_expected:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            f"Session {session_id} has {len(indices)} chunk(s), manifest expects {manifest.total_expected}",
            suggested_action=SuggestedAction.RETRY_WRITE,
            context={
                "session_id": session_id,
                "chunk_count": len(indices),
                "total_expected": manifest.total_expected,
            },
        )

    data = b"".join(files[i].read_bytes() for i in indices)
    return data, indices


def chunk_preview(ctx, session_id: str) -> Dict[str, Any]:
    """Dry-run compose: same checks, same bytes, no writes"""
    data, indices = _assemble(ctx, session_id)
    return {
        "ok": True,
        "session_id": session_id,
        "content": data.decode("utf-8", errors="replace"),
        "chunk_count": len(indices),
        "total_bytes": len(data),
        "sha256": hash_bytes(data),
    }


def chunk_compose(
    ctx,
    session_id: str,
    path: str,
    mode: ComposeMode = ComposeMode.CREATE,
    cleanup: bool = False,
) -> Dict[str, Any]:
    """Concatenate chunks in index order and write the target through safe_write"""
    data, indices = _assemble(ctx, session_id)
    receipt = safe_write(
        ctx,
        path,
        data,
        WriteMode(mode.value),
        kind=JournalKind.COMPOSE,
        session=session_id,
    )
    if cleanup:
        shutil.rmtree(session_dir(ctx, session_id), ignore_errors=True)
        logger.info(f"Removed chunk session {session_id} after compose")

    result = receipt.to_dict()
    result.update({"session_id": session_id, "chunk_count": len(indices), "cleaned_up": cleanup})
    return result

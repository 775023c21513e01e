"""Four-phase transactional writes.

precondition -> exclusive temp write + fsync -> read-back hash verify ->
atomic rename. The target is either fully replaced or untouched.
"""

import errno
import hashlib
import logging
import os
import re
import secrets
import signal
from pathlib import Path
from typing import Callable, Optional, Tuple

from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .models import JournalKind, Verdict, WriteMode, WriteReceipt
from .risk import risk_score
from .workspace import relative_to_root, resolve_path

logger = logging.getLogger(__name__)

ABSENT = "absent"
TEMP_MARKER = ".rw-tmp-"
_TEMP_NAME_RE = re.compile(r"^\..+\.rw-tmp-(\d+)-[0-9a-f]+$")
_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")

_QUOTA_ERRNOS = {errno.ENOSPC, errno.EDQUOT, errno.EFBIG}
_PERMISSION_ERRNOS = {errno.EACCES, errno.EPERM, errno.EROFS}
_NO_LINK_ERRNOS = {errno.EPERM, errno.EOPNOTSUPP, errno.ENOTSUP}

CrashHook = Callable[[str], None]


def hash_bytes(data: bytes) -> str:
    """Lowercase SHA-256 hex digest"""
    return hashlib.sha256(data).hexdigest()


def hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def crash_hook_for(phase: Optional[str]) -> Optional[CrashHook]:
    """Test-only: SIGKILL the process when the named phase is reached"""
    if not phase:
        return None

    def _hook(reached: str) -> None:
        if reached == phase:
            logger.warning(f"Crash hook firing at phase {reached}")
            os.kill(os.getpid(), signal.SIGKILL)

    return _hook


def _os_error(e: OSError, target: Path) -> ToolError:
    if e.errno in _QUOTA_ERRNOS:
        return ToolError(
            ErrorKind.QUOTA_EXCEEDED,
            ReasonHint.SIZE_LIMIT,
            f"Disk quota exceeded writing {target.name}",
            suggested_action=SuggestedAction.REDUCE_SIZE,
            context={"detail": str(e)},
        )
    if e.errno in _PERMISSION_ERRNOS:
        return ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.PERMISSION,
            f"Permission denied writing {target.name}",
            suggested_action=SuggestedAction.FIX_PATH,
            context={"detail": str(e)},
        )
    return ToolError(
        ErrorKind.WRITE_CORRUPTION,
        ReasonHint.UNKNOWN,
        f"I/O error writing {target.name}",
        suggested_action=SuggestedAction.RETRY_WRITE,
        context={"detail": str(e)},
    )


def _open_exclusive_temp(target: Path):
    while True:
        name = f".{target.name}{TEMP_MARKER}{os.getpid()}-{secrets.token_hex(6)}"
        temp = target.parent / name
        try:
            fd = os.open(str(temp), os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o644)
            return fd, temp
        except FileExistsError:
            continue


def _exists_error(target: Path) -> ToolError:
    return ToolError(
        ErrorKind.POLICY_VIOLATION,
        ReasonHint.UNKNOWN,
        f"Target already exists: {target.name}",
        suggested_action=SuggestedAction.FIX_PATH,
        context={"mode": WriteMode.CREATE.value},
    )


def _place_new(temp: Path, target: Path) -> None:
    """Link temp to target, failing if target appeared since the precondition check"""
    try:
        os.link(temp, target)
    except FileExistsError as e:
        raise _exists_error(target) from e
    except OSError as e:
        if e.errno not in _NO_LINK_ERRNOS:
            raise
        logger.warning(f"Hard links unsupported for {target.name}; create is not exclusive")
        os.replace(temp, target)
        return
    try:
        temp.unlink()
    except OSError as e:
        logger.error(f"Could not remove temp file {temp.name}: {e}")


def _read_back(path: Path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _fsync_dir(directory: Path) -> None:
    if not hasattr(os, "O_DIRECTORY"):
        return
    dir_fd = os.open(str(directory), os.O_DIRECTORY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


def four_phase_write(
    target: Path,
    data: bytes,
    crash_hook: Optional[CrashHook] = None,
    *,
    exclusive: bool = False,
) -> str:
    """Write data to target atomically and return its verified SHA-256.

    With exclusive=True the target must not exist when the file is placed.
    """
    hook = crash_hook or (lambda phase: None)
    expected = hash_bytes(data)
    temp: Optional[Path] = None
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        existing_mode = target.stat().st_mode & 0o777 if target.exists() else None

        hook("pre_temp")
        fd, temp = _open_exclusive_temp(target)
        try:
            view = memoryview(data)
            while view:
                written = os.write(fd, view)
                if written == 0:
                    raise OSError(errno.ENOSPC, "write made no progress")
                view = view[written:]
            os.fsync(fd)
        finally:
            os.close(fd)
        if existing_mode is not None:
            os.chmod(temp, existing_mode)
        hook("post_temp")

        actual = hash_bytes(_read_back(temp))
        if actual != expected:
            raise ToolError(
                ErrorKind.WRITE_CORRUPTION,
                ReasonHint.UNKNOWN,
                f"Read-back hash mismatch for {target.name}",
                suggested_action=SuggestedAction.RETRY_WRITE,
                context={"expected_sha256": expected, "actual_sha256": actual},
            )

        hook("pre_rename")
        if exclusive:
            _place_new(temp, target)
        else:
            os.replace(temp, target)
        temp = None
        _fsync_dir(target.parent)
        hook("post_rename")
        return expected
    except OSError as e:
        raise _os_error(e, target) from e
    finally:
        if temp is not None:
            try:
                temp.unlink()
            except OSError:
                pass


def _pid_alive(pid: int) -> bool:
    if pid == os.getpid():
        return True
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def sweep_temp_files(root: Path, skip_dirs=(".git", "node_modules")) -> int:
    """Remove temp files left behind by writers that no longer exist"""
    removed = 0
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = [d for d in dirnames if d not in skip_dirs]
        for name in filenames:
            match = _TEMP_NAME_RE.match(name)
            if not match or _pid_alive(int(match.group(1))):
                continue
            try:
                os.unlink(os.path.join(dirpath, name))
                removed += 1
            except OSError as e:
                logger.error(f"Could not remove stale temp file {name}: {e}")
    if removed:
        logger.info(f"Removed {removed} stale temp file(s)")
    return removed


def _check_precondition(target: Path, mode: WriteMode, expected_prev_sha256: Optional[str]) -> Optional[bytes]:
    """Validate mode and optimistic-lock hash; returns current bytes when needed"""
    if mode is WriteMode.CREATE and expected_prev_sha256 is not None:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            "mode=create cannot carry expected_prev_sha256",
            suggested_action=SuggestedAction.FIX_ARGS,
        )
    if expected_prev_sha256 is not None and expected_prev_sha256 != ABSENT:
        if not _HEX64_RE.match(expected_prev_sha256):
            raise ToolError(
                ErrorKind.POLICY_VIOLATION,
                ReasonHint.UNKNOWN,
                "expected_prev_sha256 must be 64 lowercase hex characters or 'absent'",
                suggested_action=SuggestedAction.FIX_ARGS,
            )

    exists = target.exists()
    if exists and not target.is_file():
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.PERMISSION,
            f"Target is not a regular file: {target.name}",
            suggested_action=SuggestedAction.FIX_PATH,
        )
    if mode is WriteMode.CREATE and exists:
        raise _exists_error(target)

    current = target.read_bytes() if exists else None
    if expected_prev_sha256 is not None:
        actual = hash_bytes(current) if current is not None else ABSENT
        if actual != expected_prev_sha256:
            raise ToolError(
                ErrorKind.STALE_PRECONDITION,
                ReasonHint.UNKNOWN,
                f"Target changed since it was last read: {target.name}",
                suggested_action=SuggestedAction.REFRESH_PRECONDITION,
                context={"expected_sha256": expected_prev_sha256, "current_sha256": actual},
            )
    return current


def write_file(
    target: Path,
    content: bytes,
    mode: WriteMode,
    expected_prev_sha256: Optional[str] = None,
    *,
    max_bytes: Optional[int] = None,
    crash_hook: Optional[CrashHook] = None,
) -> Tuple[str, int]:
    """Precondition check plus four-phase write; returns (sha256, final bytes)"""
    current = _check_precondition(target, mode, expected_prev_sha256)
    data = (current or b"") + content if mode is WriteMode.APPEND else content

    if max_bytes is not None and len(data) > max_bytes:
        raise ToolError(
            ErrorKind.QUOTA_EXCEEDED,
            ReasonHint.SIZE_LIMIT,
            f"Write of {len(data)} bytes exceeds the {max_bytes}-byte cap",
            suggested_action=SuggestedAction.CHUNK,
            context={"bytes": len(data), "max_bytes": max_bytes},
        )
    sha = four_phase_write(target, data, crash_hook, exclusive=mode is WriteMode.CREATE)
    return sha, len(data)


def safe_write(
    ctx,
    path: str,
    content: bytes,
    mode: WriteMode = WriteMode.CREATE,
    expected_prev_sha256: Optional[str] = None,
    *,
    kind: JournalKind = JournalKind.WRITE,
    session: Optional[str] = None,
    internal: bool = False,
) -> WriteReceipt:
    """Tool-level write: resolve, gate, write, journal"""
    target = resolve_path(ctx.root, path)
    if not internal and ctx.is_state_path(target):
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.PERMISSION,
            "The server state directory is not writable through this tool",
            suggested_action=SuggestedAction.FIX_PATH,
            context={"path": path},
        )

    if ctx.policy.block_on_high_risk and not internal:
        report = risk_score(content.decode("utf-8", errors="replace"), ctx.policy, path)
        if report.verdict is Verdict.HIGH:
            raise ToolError(
                ErrorKind.BLOCKED,
                ReasonHint.CONTENT_FILTER,
                "Content scored high risk; redact before writing",
                detected_patterns=report.families,
                suggested_action=SuggestedAction.REDACT,
                context={"score": report.score, "verdict": report.verdict.value},
            )

    sha, size = write_file(
        target,
        content,
        mode,
        expected_prev_sha256,
        max_bytes=ctx.max_write_bytes,
        crash_hook=ctx.crash_hook,
    )
    relative = relative_to_root(ctx.root, target)
    seq = ctx.journal.record(kind, relative, sha, size, mode.value, session=session)
    logger.info(f"Wrote {size} bytes to {relative} ({mode.value}, seq {seq})")
    return WriteReceipt(
        path=str(target),
        relative_path=relative,
        sha256=sha,
        bytes=size,
        mode=mode.value,
        journal_seq=seq,
    )

"""Append-only audit journal (.resilient_write/journal.jsonl).

Rows carry metadata only (path, hash, byte count, mode, caller); file
content never enters the log. Reads are linear scans.
"""

import errno
import json
import logging
import os
from collections import Counter, OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .models import AnalyticsReport, JournalKind, iso_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

JOURNAL_FILE = "journal.jsonl"
WRITE_KINDS = (JournalKind.WRITE.value, JournalKind.COMPOSE.value)


class JournalRow(BaseModel):
    """One audit record; serialized with sorted keys, one per line"""

    model_config = ConfigDict(extra="forbid", use_enum_values=True)

    ts: str
    path: str
    sha256: str = Field(..., pattern=r"^[0-9a-f]{64}$")
    bytes: int = Field(..., ge=0)
    mode: str
    caller: str = "unknown"
    seq: int = Field(0, ge=0)
    kind: JournalKind
    session: Optional[str] = None
    detail: Optional[str] = None

    def to_line(self) -> str:
        return json.dumps(self.model_dump(exclude_none=True), sort_keys=True, ensure_ascii=False)


def _quota_error(path: Path, e: OSError) -> ToolError:
    return ToolError(
        ErrorKind.QUOTA_EXCEEDED,
        ReasonHint.SIZE_LIMIT,
        f"No space left appending to {path.name}",
        suggested_action=SuggestedAction.REDUCE_SIZE,
        context={"detail": str(e)},
    )


def _needs_separator(fd: int) -> bool:
    size = os.fstat(fd).st_size
    return size > 0 and os.pread(fd, 1, size - 1) != b"\n"


def _write_all(fd: int, data: bytes) -> None:
    view = memoryview(data)
    while view:
        written = os.write(fd, view)
        if written == 0:
            raise OSError(errno.ENOSPC, "write made no progress")
        view = view[written:]


def append_jsonl(path: Path, record: Dict[str, Any]) -> None:
    """Append one sorted-key JSON line, ending a torn last line first"""
    path.parent.mkdir(parents=True, exist_ok=True)
    line = (json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
    fd = os.open(str(path), os.O_RDWR | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        if _needs_separator(fd):
            logger.warning(f"{path.name} ends with a partial line; terminating it")
            line = b"\n" + line
        _write_all(fd, line)
        os.fsync(fd)
    except OSError as e:
        if e.errno in (errno.ENOSPC, errno.EDQUOT):
            raise _quota_error(path, e) from e
        raise
    finally:
        os.close(fd)


def read_jsonl(path: Path) -> Tuple[List[Dict[str, Any]], List[str]]:
    """Parse every line; corrupt lines are skipped and reported as warnings"""
    records: List[Dict[str, Any]] = []
    warnings: List[str] = []
    if not path.is_file():
        return records, warnings
    with open(path, "rb") as f:
        for number, raw in enumerate(f, start=1):
            text = raw.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError:
                warnings.append(f"line {number}: unparseable, skipped")
                continue
            if not isinstance(record, dict):
                warnings.append(f"line {number}: not an object, skipped")
                continue
            records.append(record)
    return records, warnings


class Journal:
    def __init__(self, state_dir: Path, caller: str = "unknown"):
        self.path = state_dir / JOURNAL_FILE
        self.caller = caller
        self._seq = self._count_rows()

    def _count_rows(self) -> int:
        if not self.path.is_file():
            return 0
        with open(self.path, "rb") as f:
            return sum(1 for line in f if line.strip())

    @property
    def seq(self) -> int:
        return self._seq

    def append_row(self, row: JournalRow) -> int:
        """Append a row, assigning the next sequence number"""
        row = row.model_copy(update={"seq": self._seq + 1})
        append_jsonl(self.path, row.model_dump(exclude_none=True))
        self._seq = row.seq
        return row.seq

    def record(
        self,
        kind: JournalKind,
        path: str,
        sha256: str,
        size: int,
        mode: str,
        *,
        session: Optional[str] = None,
        detail: Optional[str] = None,
    ) -> int:
        return self.append_row(
            JournalRow(
                ts=iso_timestamp(),
                path=path,
                sha256=sha256,
                bytes=size,
                mode=mode,
                caller=self.caller,
                kind=kind,
                session=session,
                detail=detail,
            )
        )

    def rows(self) -> Tuple[List[JournalRow], List[str]]:
        records, warnings = read_jsonl(self.path)
        rows = []
        for record in records:
            try:
                rows.append(JournalRow.model_validate(record))
            except ValidationError:
                warnings.append(f"seq {record.get('seq', '?')}: invalid row, skipped")
        return rows, warnings

    def tail(self, n: int) -> Dict[str, Any]:
        rows, warnings = self.rows()
        selected = rows[-n:] if n > 0 else []
        return {
            "ok": True,
            "rows": [r.model_dump(exclude_none=True) for r in selected],
            "total": len(rows),
            "warnings": warnings,
        }

    def analytics(self) -> AnalyticsReport:
        rows, _ = self.rows()
        return analyze_rows(rows)


def _sessions(rows: List[JournalRow]) -> Iterator[Dict[str, Any]]:
    chunks: "OrderedDict[str, set]" = OrderedDict()
    composed = set()
    for row in rows:
        if row.session is None:
            continue
        if row.kind == JournalKind.CHUNK.value:
            chunks.setdefault(row.session, set()).add(row.path)
        elif row.kind == JournalKind.COMPOSE.value:
            chunks.setdefault(row.session, set())
            composed.add(row.session)
    for session, paths in chunks.items():
        yield {"session": session, "chunks": len(paths), "composed": session in composed}


def analyze_rows(rows: List[JournalRow]) -> AnalyticsReport:
    """Pure summary of journal rows"""
    if not rows:
        return AnalyticsReport()

    writes = [r for r in rows if r.kind in WRITE_KINDS]
    per_path = Counter(r.path for r in writes)
    times = [parse_timestamp(r.ts) for r in rows]
    first, last = min(times), max(times)
    span_minutes = (last - first).total_seconds() / 60.0

    velocity = 0.0
    if len(rows) > 1 and span_minutes > 0:
        velocity = len(writes) / span_minutes

    mean_interval = None
    if len(times) > 1:
        ordered = sorted(times)
        gaps = [(b - a).total_seconds() for a, b in zip(ordered, ordered[1:])]
        mean_interval = sum(gaps) / len(gaps)

    return AnalyticsReport(
        total_writes=len(writes),
        bytes_written=sum(r.bytes for r in writes),
        writes_per_path=dict(sorted(per_path.items(), key=lambda kv: (-kv[1], kv[0]))),
        chunk_sessions=list(_sessions(rows)),
        write_velocity=velocity,
        span={"first_ts": iso_timestamp(first), "last_ts": iso_timestamp(last)},
        rows_by_kind=dict(Counter(r.kind for r in rows)),
        mean_interval_seconds=mean_interval,
    )

from __future__ import annotations

import errno
import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from pydantic import ValidationError

from layers import journal as journal_module
from layers.atomic import safe_write
from layers.envelope import ErrorKind, ToolError
from layers.journal import Journal, JournalRow, analyze_rows, append_jsonl, read_jsonl
from layers.models import JournalKind, WriteMode, iso_timestamp, parse_timestamp

from .util import sha

T0 = datetime(2026, 10, 17, 9, 0, 0, tzinfo=timezone.utc)


def _row(kind: JournalKind, path: str, size: int, minute: float, session=None) -> JournalRow:
    return JournalRow(
        ts=iso_timestamp(T0 + timedelta(minutes=minute)),
        path=path,
        sha256="0" * 64,
        bytes=size,
        mode="create",
        kind=kind,
        session=session,
    )


def test_timestamps_are_millisecond_utc():
    stamp = iso_timestamp(T0)
    assert stamp == "2026-10-17T09:00:00.000Z"
    assert parse_timestamp(stamp) == T0


def test_rows_are_sorted_key_json_lines(ctx, workspace: Path):
    safe_write(ctx, "a.txt", b"alpha")
    safe_write(ctx, "a.txt", b"beta", WriteMode.OVERWRITE)
    lines = (workspace / ".resilient_write" / "journal.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for number, line in enumerate(lines, start=1):
        row = json.loads(line)
        assert list(row) == sorted(row)
        assert row["seq"] == number
        assert row["caller"] == "unknown"
        assert "session" not in row
    assert json.loads(lines[1])["sha256"] == sha("beta")


def test_seq_continues_across_reopen(ctx, make_ctx):
    safe_write(ctx, "a.txt", b"1")
    safe_write(ctx, "b.txt", b"2")
    reopened = make_ctx()
    assert reopened.journal.seq == 2
    assert safe_write(reopened, "c.txt", b"3").journal_seq == 3


def test_caller_is_recorded(ctx):
    ctx.caller = "writer-7"
    safe_write(ctx, "a.txt", b"x")
    assert ctx.journal.tail(1)["rows"][0]["caller"] == "writer-7"


@pytest.mark.parametrize("n,expected", [(0, []), (1, ["c.txt"]), (2, ["b.txt", "c.txt"]), (50, ["a.txt", "b.txt", "c.txt"])])
def test_tail(ctx, n: int, expected):
    for name in ("a.txt", "b.txt", "c.txt"):
        safe_write(ctx, name, name.encode())
    tail = ctx.journal.tail(n)
    assert [r["path"] for r in tail["rows"]] == expected
    assert tail["total"] == 3
    assert tail["warnings"] == []


def test_corrupt_lines_are_skipped_with_warnings(ctx, workspace: Path):
    safe_write(ctx, "a.txt", b"x")
    with open(workspace / ".resilient_write" / "journal.jsonl", "a") as f:
        f.write("{not json\n")
        f.write("[1, 2]\n")
    safe_write(ctx, "b.txt", b"y")
    tail = ctx.journal.tail(10)
    assert [r["path"] for r in tail["rows"]] == ["a.txt", "b.txt"]
    assert len(tail["warnings"]) == 2
    assert tail["rows"][1]["seq"] > tail["rows"][0]["seq"]


def test_invalid_row_shape_is_reported(ctx, workspace: Path):
    append_jsonl(workspace / ".resilient_write" / "journal.jsonl", {"seq": 9, "kind": "write"})
    tail = ctx.journal.tail(5)
    assert tail["rows"] == []
    assert tail["warnings"] == ["seq 9: invalid row, skipped"]


def test_row_model_rejects_bad_hash():
    with pytest.raises(ValidationError):
        JournalRow(ts="x", path="a", sha256="nope", bytes=1, mode="create", kind="write")


def test_read_jsonl_missing_file(tmp_path: Path):
    assert read_jsonl(tmp_path / "none.jsonl") == ([], [])


def test_disk_full_on_append(tmp_path: Path, monkeypatch):
    def full(fd, data):
        raise OSError(errno.ENOSPC, "No space left on device")

    monkeypatch.setattr(journal_module.os, "write", full)
    with pytest.raises(ToolError) as info:
        append_jsonl(tmp_path / "j.jsonl", {"a": 1})
    assert info.value.kind is ErrorKind.QUOTA_EXCEEDED


def test_append_after_torn_line_starts_a_new_line(call, workspace: Path):
    state = workspace / ".resilient_write"
    state.mkdir(exist_ok=True)
    (state / "journal.jsonl").write_text('{"bytes": 1, "caller": "x", "kind": "wri')
    assert call("rw.safe_write", path="a.txt", content="hello")["ok"] is True
    tail = call("rw.journal_tail", n=10)
    assert [r["path"] for r in tail["rows"]] == ["a.txt"]
    assert tail["warnings"] == ["line 1: unparseable, skipped"]


def test_short_writes_are_completed(tmp_path: Path, monkeypatch):
    real_write = journal_module.os.write

    def half(fd, data):
        data = bytes(data)
        return real_write(fd, data[: max(1, len(data) // 2)])

    monkeypatch.setattr(journal_module.os, "write", half)
    path = tmp_path / "j.jsonl"
    append_jsonl(path, {"a": 1, "note": "x" * 40})
    append_jsonl(path, {"a": 2})
    monkeypatch.undo()
    rows, warnings = read_jsonl(path)
    assert [r["a"] for r in rows] == [1, 2]
    assert warnings == []


def test_write_without_progress_is_quota_error(tmp_path: Path, monkeypatch):
    monkeypatch.setattr(journal_module.os, "write", lambda fd, data: 0)
    with pytest.raises(ToolError) as info:
        append_jsonl(tmp_path / "j.jsonl", {"a": 1})
    assert info.value.kind is ErrorKind.QUOTA_EXCEEDED


def test_direct_journal_append(tmp_path: Path):
    journal = Journal(tmp_path, caller="t")
    assert journal.record(JournalKind.WRITE, "a", "1" * 64, 3, "create") == 1
    assert journal.record(JournalKind.WARNING, "b", "2" * 64, 0, "warning", detail="odd") == 2
    rows, warnings = journal.rows()
    assert [r.seq for r in rows] == [1, 2]
    assert rows[1].detail == "odd"
    assert warnings == []


# --- analytics ---------------------------------------------------------------


def test_analytics_on_empty_journal(ctx):
    report = ctx.journal.analytics().to_dict()
    assert report["total_writes"] == 0
    assert report["span"] is None
    assert report["mean_interval_seconds"] is None


def test_analytics_summary():
    rows = [
        _row(JournalKind.WRITE, "a.md", 10, 0),
        _row(JournalKind.WRITE, "a.md", 20, 1),
        _row(JournalKind.CHUNK, ".resilient_write/chunks/s1/part-001.txt", 5, 2, "s1"),
        _row(JournalKind.CHUNK, ".resilient_write/chunks/s1/part-002.txt", 5, 3, "s1"),
        _row(JournalKind.CHUNK, ".resilient_write/chunks/s1/part-002.txt", 5, 4, "s1"),
        _row(JournalKind.COMPOSE, "out.md", 10, 5, "s1"),
        _row(JournalKind.SCRATCH, ".resilient_write/scratch/x.bin", 99, 6),
        _row(JournalKind.CHUNK, ".resilient_write/chunks/s2/part-001.txt", 1, 8, "s2"),
    ]
    report = analyze_rows(rows).to_dict()
    assert report["total_writes"] == 3
    assert report["bytes_written"] == 40
    assert report["writes_per_path"] == {"a.md": 2, "out.md": 1}
    assert report["chunk_sessions"] == [
        {"session": "s1", "chunks": 2, "composed": True},
        {"session": "s2", "chunks": 1, "composed": False},
    ]
    assert report["write_velocity"] == pytest.approx(3 / 8)
    assert report["span"] == {"first_ts": "2026-10-17T09:00:00.000Z", "last_ts": "2026-10-17T09:08:00.000Z"}
    assert report["rows_by_kind"] == {"write": 2, "chunk": 4, "compose": 1, "scratch": 1}
    assert report["mean_interval_seconds"] == pytest.approx(480 / 7)


def test_analytics_single_row_has_no_velocity():
    report = analyze_rows([_row(JournalKind.WRITE, "a", 1, 0)])
    assert report.total_writes == 1
    assert report.write_velocity == 0.0
    assert report.mean_interval_seconds is None


def test_analytics_tool(call):
    call("rw.safe_write", path="a.txt", content="abc")
    call("rw.safe_write", path="a.txt", content="d", mode="append")
    body = call("rw.analytics")
    assert body["ok"] is True
    assert body["total_writes"] == 2
    assert body["bytes_written"] == 7
    assert body["writes_per_path"] == {"a.txt": 2}

from __future__ import annotations

import random
import string
from datetime import datetime, timezone
from pathlib import Path

import pytest

from layers import handoff as handoff_module
from layers.envelope import ErrorKind, ReasonHint, ToolError
from layers.frontmatter import FrontMatterError, fm_dumps, fm_parse
from layers.handoff import HandoffModel, build_envelope, handoff_read, handoff_write, parse_handoff

from .util import sha


def _model(**overrides) -> HandoffModel:
    data = {
        "task_id": "telemetry-report",
        "status": "partial",
        "agent": "writer-1",
        "summary": "Sections 1-3 drafted.\nSection 4 blocked on figures.",
        "next_steps": ["Draft section 4", "Re-run validation"],
        "last_good_state": [],
    }
    data.update(overrides)
    return HandoffModel.model_validate(data)


def _write(ctx, body: str = "Notes for the next agent.\n", archive: bool = True, **overrides):
    return handoff_write(ctx, build_envelope(ctx, _model(**overrides), body), archive)


def _archives(workspace: Path) -> list:
    return sorted(p.name for p in (workspace / ".resilient_write" / "handoffs").iterdir())


def test_write_then_read_round_trips(ctx, workspace: Path):
    (workspace / "report.tex").write_text("\\documentclass{article}")
    result = _write(ctx, last_good_state=[{"path": "report.tex"}])
    assert result["ok"] is True
    assert result["archived_to"] is None

    read = handoff_read(ctx)
    envelope = read["envelope"]
    assert envelope["task_id"] == "telemetry-report"
    assert envelope["status"] == "partial"
    assert envelope["summary"] == "Sections 1-3 drafted.\nSection 4 blocked on figures."
    assert envelope["next_steps"] == ["Draft section 4", "Re-run validation"]
    assert envelope["last_good_state"] == [{"path": "report.tex", "sha256": sha("\\documentclass{article}")}]
    assert envelope["body"] == "Notes for the next agent.\n"
    assert read["drift"] == []


def test_document_layout(ctx, workspace: Path):
    _write(ctx)
    text = (workspace / "HANDOFF.md").read_text()
    assert text.startswith("---\ntask_id: telemetry-report\nstatus: partial\nagent: writer-1\nsummary: |")
    assert "\n---\nNotes for the next agent.\n" in text


def test_second_write_archives_the_first(ctx, workspace: Path):
    _write(ctx)
    first = (workspace / "HANDOFF.md").read_bytes()
    result = _write(ctx, status="complete")
    archived = workspace / result["archived_to"]
    assert archived.read_bytes() == first
    assert archived.parent == workspace / ".resilient_write" / "handoffs"
    assert handoff_read(ctx)["envelope"]["status"] == "complete"


def test_archive_can_be_skipped(ctx, workspace: Path):
    _write(ctx)
    assert _write(ctx, archive=False)["archived_to"] is None
    assert _archives(workspace) == []


def test_archive_collisions_get_a_counter(ctx, workspace: Path, monkeypatch):
    frozen = datetime(2026, 10, 17, 9, 30, 0, tzinfo=timezone.utc)
    monkeypatch.setattr(handoff_module, "utc_now", lambda: frozen)
    for _ in range(4):
        _write(ctx)
    assert _archives(workspace) == [
        "20261017T093000Z-1-HANDOFF.md",
        "20261017T093000Z-2-HANDOFF.md",
        "20261017T093000Z-HANDOFF.md",
    ]


def test_empty_next_steps_is_valid(ctx):
    _write(ctx, next_steps=[])
    assert handoff_read(ctx)["envelope"]["next_steps"] == []


def test_agent_is_optional(ctx, workspace: Path):
    _write(ctx, agent=None)
    assert "agent:" not in (workspace / "HANDOFF.md").read_text()
    assert handoff_read(ctx)["envelope"].get("agent") is None


def test_handoff_is_journaled(ctx):
    _write(ctx)
    row = ctx.journal.tail(1)["rows"][0]
    assert row["kind"] == "handoff"
    assert row["path"] == "HANDOFF.md"


# --- drift -------------------------------------------------------------------


def test_drift_names_only_changed_files(ctx, workspace: Path):
    for name in ("a.txt", "b.txt", "c.txt"):
        (workspace / name).write_text(name)
    _write(ctx, last_good_state=[{"path": n} for n in ("a.txt", "b.txt", "c.txt")])
    (workspace / "b.txt").write_text("edited")
    (workspace / "c.txt").unlink()

    drift = handoff_read(ctx)["drift"]
    assert drift == [
        {"path": "b.txt", "recorded_sha256": sha("b.txt"), "current_sha256": sha("edited")},
        {"path": "c.txt", "recorded_sha256": sha("c.txt"), "current_sha256": "missing"},
    ]


def test_explicit_hash_is_kept(ctx, workspace: Path):
    (workspace / "a.txt").write_text("now")
    _write(ctx, last_good_state=[{"path": "a.txt", "sha256": sha("then")}])
    drift = handoff_read(ctx)["drift"]
    assert drift[0]["recorded_sha256"] == sha("then")


def test_unhashable_missing_file_is_rejected(ctx):
    with pytest.raises(ToolError) as info:
        _write(ctx, last_good_state=[{"path": "ghost.txt"}])
    assert info.value.kind is ErrorKind.POLICY_VIOLATION


def test_escaping_state_path_is_rejected(ctx):
    with pytest.raises(ToolError) as info:
        _write(ctx, last_good_state=[{"path": "../../etc/passwd", "sha256": "0" * 64}])
    assert info.value.reason_hint is ReasonHint.PERMISSION


# --- parse failures ----------------------------------------------------------


def test_read_without_handoff(ctx):
    with pytest.raises(ToolError) as info:
        handoff_read(ctx)
    assert info.value.kind is ErrorKind.POLICY_VIOLATION


@pytest.mark.parametrize(
    "text",
    [
        "no front matter at all\n",
        "---\ntask_id: [unclosed\n---\nbody\n",
        "---\n- a\n- b\n---\nbody\n",
        "---\nbase: &a {status: partial}\nother: *a\n---\nbody\n",
    ],
)
def test_unparseable_handoff(ctx, workspace: Path, text: str):
    (workspace / "HANDOFF.md").write_text(text)
    with pytest.raises(ToolError) as info:
        handoff_read(ctx)
    assert info.value.reason_hint is ReasonHint.ENCODING
    assert "yaml_error" in info.value.context


def test_schema_violations_in_file(ctx, workspace: Path):
    (workspace / "HANDOFF.md").write_text("---\ntask_id: t\nstatus: sleeping\nsummary: s\n---\n")
    with pytest.raises(ToolError) as info:
        handoff_read(ctx)
    assert any("status" in e for e in info.value.context["errors"])


def test_anchor_error_carries_a_line():
    with pytest.raises(FrontMatterError) as info:
        fm_parse("---\ntask_id: t\nx: &anchor 1\n---\n")
    assert info.value.line == 2


def test_block_scalars_survive_dump():
    text = fm_dumps("", {"summary": "line one\nline two\n"})
    assert "summary: |" in text
    assert fm_parse(text) == ("", {"summary": "line one\nline two\n"})


# --- through the dispatcher --------------------------------------------------


def test_handoff_tools_through_dispatcher(call, workspace: Path):
    (workspace / "a.txt").write_text("a")
    written = call(
        "rw.handoff_write",
        task_id="t-1",
        status="blocked",
        summary="waiting",
        next_steps=["ask"],
        last_good_state=[{"path": "a.txt"}],
        body="b",
    )
    assert written["ok"] is True
    read = call("rw.handoff_read")
    assert read["envelope"]["status"] == "blocked"
    assert read["drift"] == []


@pytest.mark.parametrize(
    "overrides",
    [
        {"status": "sleeping"},
        {"task_id": "has space"},
        {"last_good_state": [{"path": "a.txt", "sha256": "XYZ"}]},
        {"colour": "blue"},
    ],
)
def test_invalid_handoff_arguments(call, overrides):
    args = {"task_id": "t", "status": "partial", "summary": "s"}
    args.update(overrides)
    body = call("rw.handoff_write", **args)
    assert body["error"] == "policy_violation"
    assert body["suggested_action"] == "fix_args"


# --- generated round-trips ---------------------------------------------------

TEXT = string.ascii_letters + string.digits + " .,:;-#'\"!?()[]{}*&|>%@`é漢\n"
STATUSES = ["partial", "blocked", "complete", "abandoned"]


def _text(rng: random.Random, low: int, high: int) -> str:
    return "".join(rng.choice(TEXT) for _ in range(rng.randint(low, high))).lstrip(" \n")


@pytest.mark.parametrize("seed", range(100))
def test_generated_envelopes_round_trip(ctx, seed: int):
    rng = random.Random(seed)
    model = HandoffModel(
        task_id="".join(rng.choice(string.ascii_letters + string.digits + "._-") for _ in range(rng.randint(1, 40))),
        status=rng.choice(STATUSES),
        agent=rng.choice([None, _text(rng, 0, 20)]),
        summary=_text(rng, 0, 120),
        next_steps=[_text(rng, 0, 60) for _ in range(rng.randint(0, 4))],
        last_good_state=[
            {"path": f"dir{i}/file-{rng.randrange(1000)}.txt", "sha256": "%064x" % rng.getrandbits(256)}
            for i in range(rng.randint(0, 3))
        ],
    )
    envelope = build_envelope(ctx, model, _text(rng, 0, 200))
    handoff_write(ctx, envelope, archive=False)
    assert handoff_read(ctx)["envelope"] == envelope.to_dict()
    assert parse_handoff((ctx.root.path / "HANDOFF.md").read_text(encoding="utf-8")) == envelope

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional


class Verdict(str, Enum):
    SAFE = "safe"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class WriteMode(str, Enum):
    CREATE = "create"
    OVERWRITE = "overwrite"
    APPEND = "append"


class ComposeMode(str, Enum):
    CREATE = "create"
    OVERWRITE = "overwrite"


class JournalKind(str, Enum):
    WRITE = "write"
    CHUNK = "chunk"
    COMPOSE = "compose"
    SCRATCH = "scratch"
    HANDOFF = "handoff"
    WARNING = "warning"


class RootSource(str, Enum):
    ENV = "env"
    CWD = "cwd"
    CLI_FLAG = "cli_flag"


class HandoffStatus(str, Enum):
    PARTIAL = "partial"
    BLOCKED = "blocked"
    COMPLETE = "complete"
    ABANDONED = "abandoned"


class ValidationFormat(str, Enum):
    LATEX = "latex"
    JSON = "json"
    PYTHON = "python"
    YAML = "yaml"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def iso_timestamp(moment: Optional[datetime] = None) -> str:
    """ISO-8601 UTC with millisecond precision, e.g. 2026-01-02T03:04:05.678Z"""
    moment = moment or utc_now()
    return moment.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def parse_timestamp(value: str) -> datetime:
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


@dataclass(frozen=True)
class WorkspaceRoot:
    path: Path
    source: RootSource

    def to_dict(self) -> Dict[str, Any]:
        return {"path": str(self.path), "source": self.source.value}


@dataclass(frozen=True)
class RiskMatch:
    family: str
    snippet: str
    line: int

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "snippet": self.snippet, "line": self.line}


@dataclass(frozen=True)
class SizeIncrement:
    rule: str
    delta: float

    def to_dict(self) -> Dict[str, Any]:
        return {"rule": self.rule, "delta": self.delta}


@dataclass
class RiskReport:
    score: float
    verdict: Verdict
    matches: List[RiskMatch] = field(default_factory=list)
    suggested_actions: List[str] = field(default_factory=list)
    size_increments: List[SizeIncrement] = field(default_factory=list)
    family_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def families(self) -> List[str]:
        return list(self.family_counts)

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary format"""
        return {
            "score": self.score,
            "verdict": self.verdict.value,
            "matches": [m.to_dict() for m in self.matches],
            "suggested_actions": list(self.suggested_actions),
            "size_increments": [s.to_dict() for s in self.size_increments],
            "family_counts": dict(self.family_counts),
        }


@dataclass
class WriteReceipt:
    path: str
    relative_path: str
    sha256: str
    bytes: int
    mode: str
    journal_seq: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": True,
            "path": self.path,
            "relative_path": self.relative_path,
            "sha256": self.sha256,
            "bytes": self.bytes,
            "mode": self.mode,
            "journal_seq": self.journal_seq,
        }


@dataclass
class ChunkManifest:
    created_at: str
    updated_at: str
    total_expected: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "total_expected": self.total_expected,
        }


@dataclass
class ScratchEntry:
    sha256: str
    label: str
    content_type: str
    ts: str
    bytes: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sha256": self.sha256,
            "label": self.label,
            "content_type": self.content_type,
            "ts": self.ts,
            "bytes": self.bytes,
        }


@dataclass(frozen=True)
class FileState:
    path: str
    sha256: str

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "sha256": self.sha256}


@dataclass
class HandoffEnvelope:
    task_id: str
    status: HandoffStatus
    summary: str
    agent: Optional[str] = None
    next_steps: List[str] = field(default_factory=list)
    last_good_state: List[FileState] = field(default_factory=list)
    body: str = ""

    def front_matter(self) -> Dict[str, Any]:
        """Ordered mapping written between the --- delimiters"""
        meta: Dict[str, Any] = {"task_id": self.task_id, "status": self.status.value}
        if self.agent is not None:
            meta["agent"] = self.agent
        meta["summary"] = self.summary
        meta["next_steps"] = list(self.next_steps)
        meta["last_good_state"] = [s.to_dict() for s in self.last_good_state]
        return meta

    def to_dict(self) -> Dict[str, Any]:
        data = self.front_matter()
        data["body"] = self.body
        return data


@dataclass(frozen=True)
class DriftWarning:
    path: str
    recorded_sha256: str
    current_sha256: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "path": self.path,
            "recorded_sha256": self.recorded_sha256,
            "current_sha256": self.current_sha256,
        }


@dataclass(frozen=True)
class ValidationIssue:
    line: Optional[int]
    message: str
    severity: Severity

    def to_dict(self) -> Dict[str, Any]:
        return {"line": self.line, "message": self.message, "severity": self.severity.value}


@dataclass
class ValidationReport:
    format: ValidationFormat
    errors: List[ValidationIssue] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not any(e.severity is Severity.ERROR for e in self.errors)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "valid": self.valid,
            "format": self.format.value,
            "errors": [e.to_dict() for e in self.errors],
        }


@dataclass
class AnalyticsReport:
    total_writes: int = 0
    bytes_written: int = 0
    writes_per_path: Dict[str, int] = field(default_factory=dict)
    chunk_sessions: List[Dict[str, Any]] = field(default_factory=list)
    write_velocity: float = 0.0
    span: Optional[Dict[str, str]] = None
    rows_by_kind: Dict[str, int] = field(default_factory=dict)
    mean_interval_seconds: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total_writes": self.total_writes,
            "bytes_written": self.bytes_written,
            "writes_per_path": dict(self.writes_per_path),
            "chunk_sessions": [dict(s) for s in self.chunk_sessions],
            "write_velocity": self.write_velocity,
            "span": dict(self.span) if self.span else None,
            "rows_by_kind": dict(self.rows_by_kind),
            "mean_interval_seconds": self.mean_interval_seconds,
        }

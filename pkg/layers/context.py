import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from config.env import setup_directories
from config.settings import Settings

from .atomic import CrashHook, crash_hook_for, hash_bytes, sweep_temp_files
from .envelope import RetryLedger
from .journal import Journal
from .models import JournalKind, WorkspaceRoot
from .workspace import Policy, load_policy, policy_path, relative_to_root

logger = logging.getLogger(__name__)


@dataclass
class WorkspaceContext:
    """Everything a tool call needs: root, policy, journal and retry ledger"""

    root: WorkspaceRoot
    settings: Settings
    policy: Policy
    journal: Journal
    ledger: RetryLedger = field(default_factory=RetryLedger)
    crash_hook: Optional[CrashHook] = None

    @classmethod
    def open(cls, root: WorkspaceRoot, settings: Settings) -> "WorkspaceContext":
        dirs = setup_directories(root.path, settings.STATE_DIR_NAME)
        sweep_temp_files(root.path)
        policy = load_policy(root)
        ctx = cls(
            root=root,
            settings=settings,
            policy=policy,
            journal=Journal(dirs["state"]),
            crash_hook=crash_hook_for(settings.crash_phase),
        )
        for message in policy.warnings:
            ctx._journal_warning(message)
        return ctx

    def _journal_warning(self, message: str) -> None:
        path = policy_path(self.root)
        data = path.read_bytes() if path.is_file() else b""
        self.journal.record(
            JournalKind.WARNING,
            relative_to_root(self.root, path),
            hash_bytes(data),
            len(data),
            "warning",
            detail=message,
        )

    @property
    def state_dir(self) -> Path:
        return self.root.path / self.settings.STATE_DIR_NAME

    @property
    def max_write_bytes(self) -> int:
        return self.policy.max_write_bytes or self.settings.MAX_WRITE_BYTES

    @property
    def caller(self) -> str:
        return self.journal.caller

    @caller.setter
    def caller(self, name: str) -> None:
        self.journal.caller = name or "unknown"

    def is_state_path(self, path: Path) -> bool:
        return path == self.state_dir or self.state_dir in path.parents

    def info(self) -> dict:
        return {
            "ok": True,
            "root": str(self.root.path),
            "source": self.root.source.value,
            "state_dir": str(self.state_dir),
            "policy": self.policy.summary(),
            "env_gates": {
                "RW_SCRATCH_DISABLE_GET": self.settings.scratch_get_disabled,
                "RW_WORKSPACE": self.settings.RW_WORKSPACE is not None,
            },
            "max_write_bytes": self.max_write_bytes,
            "caller": self.caller,
        }

"""Workspace root resolution, path containment and policy loading."""

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .models import RootSource, WorkspaceRoot
from .patterns import DEFAULT_FAMILIES

logger = logging.getLogger(__name__)

DENY_ROOTS = (
    "/", "/etc", "/usr", "/tmp", "/var", "/bin", "/sbin",
    "/lib", "/boot", "/dev", "/proc", "/sys",
)

STATE_DIR_NAME = ".resilient_write"
POLICY_FILE = "policy.yaml"


class WorkspaceError(RuntimeError):
    """Fatal startup error: the workspace root cannot be used"""


def _canonical(path: Path) -> Path:
    return Path(os.path.realpath(os.path.expanduser(str(path))))


def _deny_list(home: Optional[Path]) -> List[Path]:
    entries = {_canonical(Path(p)) for p in DENY_ROOTS}
    entries.update(Path(p) for p in DENY_ROOTS)
    if home is not None:
        entries.add(_canonical(home))
    return sorted(entries)


def check_root_allowed(path: Path, home: Optional[Path] = None) -> None:
    """Reject deny-listed roots and any root that contains a deny-listed directory"""
    if home is None:
        home = Path(os.path.expanduser("~"))
    for denied in _deny_list(home):
        if path == denied:
            raise WorkspaceError(f"Refusing to use deny-listed workspace root: {path}")
        if denied != path and path in denied.parents:
            raise WorkspaceError(
                f"Refusing to use workspace root {path}: it contains deny-listed directory {denied}"
            )


def resolve_root(
    env_value: Optional[str],
    cwd: Path,
    cli_flag: Optional[Path] = None,
    home: Optional[Path] = None,
) -> WorkspaceRoot:
    """Pick the workspace root (cli flag > env > cwd) and verify it is safe to use"""
    if cli_flag:
        candidate, source = Path(cli_flag), RootSource.CLI_FLAG
    elif env_value:
        candidate, source = Path(env_value), RootSource.ENV
    else:
        candidate, source = Path(cwd), RootSource.CWD

    if not candidate.is_absolute():
        candidate = Path(cwd) / candidate
    canonical = _canonical(candidate)

    check_root_allowed(canonical, home)
    if not canonical.exists():
        raise WorkspaceError(f"Workspace root does not exist: {canonical}")
    if not canonical.is_dir():
        raise WorkspaceError(f"Workspace root is not a directory: {canonical}")

    logger.info(f"Workspace root resolved to {canonical} (source: {source.value})")
    return WorkspaceRoot(path=canonical, source=source)


def _escape_error(user_path: str, detail: str) -> ToolError:
    return ToolError(
        ErrorKind.POLICY_VIOLATION,
        ReasonHint.PERMISSION,
        f"Path escapes the workspace: {user_path}",
        suggested_action=SuggestedAction.FIX_PATH,
        context={"path": user_path, "detail": detail},
    )


def resolve_path(root: WorkspaceRoot, user_path: str) -> Path:
    """Join user_path against the root and prove the result stays inside it"""
    if not user_path or not user_path.strip():
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.UNKNOWN,
            "Path must be non-empty",
            suggested_action=SuggestedAction.FIX_PATH,
            context={"path": user_path},
        )
    if "\x00" in user_path:
        raise ToolError(
            ErrorKind.POLICY_VIOLATION,
            ReasonHint.ENCODING,
            "Path contains a NUL byte",
            suggested_action=SuggestedAction.FIX_PATH,
            context={"path": user_path},
        )

    base = root.path
    joined = Path(user_path) if os.path.isabs(user_path) else base / user_path
    lexical = Path(os.path.normpath(str(joined)))
    if lexical != base and base not in lexical.parents:
        raise _escape_error(user_path, "lexical")

    resolved = Path(os.path.realpath(str(lexical)))
    if resolved != base and base not in resolved.parents:
        raise _escape_error(user_path, "symlink")
    return resolved


def relative_to_root(root: WorkspaceRoot, path: Path) -> str:
    try:
        return path.relative_to(root.path).as_posix()
    except ValueError:
        return path.as_posix()


class FamilyOverride(BaseModel):
    model_config = ConfigDict(extra="ignore")

    enabled: bool = True
    weight: Optional[float] = Field(None, ge=0.0, le=1.0)
    extra_patterns: List[str] = Field(default_factory=list)

    @field_validator("extra_patterns")
    @classmethod
    def _patterns_compile(cls, patterns: List[str]) -> List[str]:
        for pattern in patterns:
            try:
                re.compile(pattern)
            except re.error as e:
                raise ValueError(f"invalid regex {pattern!r}: {e}")
        return patterns


class VerdictThresholds(BaseModel):
    model_config = ConfigDict(extra="ignore")

    high: float = Field(0.70, gt=0.0, le=1.0)
    medium: float = Field(0.40, gt=0.0, le=1.0)
    low: float = Field(0.10, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _ordered(self) -> "VerdictThresholds":
        if not (self.high > self.medium > self.low > 0):
            raise ValueError(
                f"thresholds must satisfy high > medium > low > 0 "
                f"(got high={self.high}, medium={self.medium}, low={self.low})"
            )
        return self


class Policy(BaseModel):
    """Per-workspace overrides loaded from .resilient_write/policy.yaml"""

    model_config = ConfigDict(extra="ignore")

    family_overrides: Dict[str, FamilyOverride] = Field(default_factory=dict)
    verdict_thresholds: VerdictThresholds = Field(default_factory=VerdictThresholds)
    retry_budget_default: int = Field(3, ge=0)
    block_on_high_risk: bool = False
    max_write_bytes: Optional[int] = Field(None, gt=0)
    warnings: List[str] = Field(default_factory=list, exclude=True)

    def family_enabled(self, family: str) -> bool:
        override = self.family_overrides.get(family)
        return override is None or override.enabled

    def summary(self) -> Dict[str, Any]:
        return {
            "verdict_thresholds": self.verdict_thresholds.model_dump(),
            "retry_budget_default": self.retry_budget_default,
            "block_on_high_risk": self.block_on_high_risk,
            "max_write_bytes": self.max_write_bytes,
            "disabled_families": sorted(
                name for name, o in self.family_overrides.items() if not o.enabled
            ),
            "warnings": list(self.warnings),
        }


POLICY_KEYS = set(Policy.model_fields) - {"warnings"}


def policy_path(root: WorkspaceRoot) -> Path:
    return root.path / STATE_DIR_NAME / POLICY_FILE


def load_policy(root: WorkspaceRoot) -> Policy:
    """Defaults overlaid with the workspace policy file; never fails"""
    path = policy_path(root)
    if not path.is_file():
        return Policy()

    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (yaml.YAMLError, OSError, UnicodeDecodeError) as e:
        logger.warning(f"Ignoring unreadable policy file {path}: {e}")
        return Policy(warnings=[f"policy.yaml unreadable, defaults used: {e}"])

    if raw is None:
        return Policy()
    if not isinstance(raw, dict):
        logger.warning(f"Ignoring policy file {path}: top level is not a mapping")
        return Policy(warnings=["policy.yaml is not a mapping, defaults used"])

    warnings: List[str] = []
    for key in sorted(set(raw) - POLICY_KEYS):
        warnings.append(f"unknown policy key ignored: {key}")
        raw.pop(key)

    families = raw.get("family_overrides")
    if isinstance(families, dict):
        for name in sorted(set(families) - set(DEFAULT_FAMILIES)):
            warnings.append(f"unknown pattern family ignored: {name}")
            families.pop(name)

    try:
        policy = Policy.model_validate(raw)
    except ValidationError as e:
        logger.warning(f"Ignoring invalid policy file {path}: {e.error_count()} error(s)")
        messages = "; ".join(err["msg"] for err in e.errors())
        return Policy(warnings=warnings + [f"policy.yaml invalid, defaults used: {messages}"])

    for message in warnings:
        logger.warning(message)
    policy.warnings = warnings
    return policy

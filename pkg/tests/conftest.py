from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Callable, Dict

import pytest
import yaml

from api.request_handler import RequestHandler
from config.settings import Settings
from layers.context import WorkspaceContext
from layers.models import RootSource, WorkspaceRoot


@pytest.fixture
def workspace(tmp_path: Path) -> Path:
    root = tmp_path / "ws"
    root.mkdir()
    return Path(os.path.realpath(root))


@pytest.fixture
def settings() -> Settings:
    return Settings(
        _env_file=None,
        RW_WORKSPACE=None,
        RW_SCRATCH_DISABLE_GET="",
        RW_TEST_CRASH_PHASE="",
        LOG_FILE=None,
    )


@pytest.fixture
def write_policy(workspace: Path) -> Callable[[Any], Path]:
    def _write(policy: Any) -> Path:
        path = workspace / ".resilient_write" / "policy.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        text = policy if isinstance(policy, str) else yaml.safe_dump(policy)
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def make_ctx(workspace: Path, settings: Settings) -> Callable[..., WorkspaceContext]:
    def _make(**overrides: Any) -> WorkspaceContext:
        merged = settings.model_copy(update=overrides) if overrides else settings
        return WorkspaceContext.open(WorkspaceRoot(workspace, RootSource.CLI_FLAG), merged)

    return _make


@pytest.fixture
def ctx(make_ctx) -> WorkspaceContext:
    return make_ctx()


@pytest.fixture
def handler(ctx: WorkspaceContext) -> RequestHandler:
    return RequestHandler(ctx)


@pytest.fixture
def call(handler: RequestHandler) -> Callable[..., Dict[str, Any]]:
    """Dispatch a tool by name and return its structured body"""

    def _call(tool: str, **arguments: Any) -> Dict[str, Any]:
        body, _ = handler.dispatch(tool, arguments)
        return body

    return _call

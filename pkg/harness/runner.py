"""Scripted agent sessions against a real server subprocess.

A script is a JSON document: setup files, an optional policy, ordered tool
steps with subset-structural expectations, and optional crash faults. Each
script runs in a fresh temp workspace with a fresh server; a fault step runs
in a server armed to SIGKILL itself at the named write phase, after which the
harness restarts the server and checks the target on disk.
"""

import json
import logging
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field

from config.settings import ROOT_DIR

logger = logging.getLogger(__name__)

WRITE_TOOLS = ("rw.safe_write", "rw.chunk_compose")
TEMP_MARKER = ".rw-tmp-"
DEFAULT_TIMEOUT = 30.0

CrashPhase = Literal["pre_temp", "post_temp", "pre_rename", "post_rename"]


class Step(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tool: str
    args: Dict[str, Any] = Field(default_factory=dict)
    expect: Dict[str, Any] = Field(default_factory=dict)


class Fault(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step_index: int = Field(..., ge=0)
    phase: CrashPhase
    action: Literal["kill"] = "kill"


class SessionScript(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "script"
    description: str = ""
    setup_files: Dict[str, str] = Field(default_factory=dict)
    policy: Optional[Dict[str, Any]] = None
    env: Dict[str, str] = Field(default_factory=dict)
    steps: List[Step]
    faults: List[Fault] = Field(default_factory=list)
    expect_files: Dict[str, Optional[str]] = Field(default_factory=dict)
    expect_write_attempts: Optional[int] = None

    @classmethod
    def load(cls, path: Path) -> "SessionScript":
        return cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))

    def fault_for(self, index: int) -> Optional[Fault]:
        return next((f for f in self.faults if f.step_index == index), None)


@dataclass
class ScriptResult:
    name: str
    passed: bool
    transcript: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    write_attempts: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "write_attempts": self.write_attempts,
            "failures": list(self.failures),
            "transcript": list(self.transcript),
        }


class ServerDied(RuntimeError):
    pass


class ServerProcess:
    """One rw-server subprocess speaking newline-delimited JSON-RPC"""

    def __init__(self, workspace: Path, env: Optional[Dict[str, str]] = None, timeout: float = DEFAULT_TIMEOUT):
        self.workspace = workspace
        self.timeout = timeout
        self.env = dict(os.environ)
        self.env.pop("RW_TEST_CRASH_PHASE", None)
        self.env.pop("RW_WORKSPACE", None)
        self.env.update(env or {})
        self.proc: Optional[subprocess.Popen] = None
        self._next_id = 0

    def start(self) -> "ServerProcess":
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "api.main", "--workspace", str(self.workspace)],
            cwd=str(ROOT_DIR),
            env=self.env,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        self.request("initialize", {"clientInfo": {"name": "rw-harness", "version": "1"}})
        self.notify("notifications/initialized")
        return self

    def _send(self, message: Dict[str, Any]) -> None:
        assert self.proc is not None and self.proc.stdin is not None
        try:
            self.proc.stdin.write((json.dumps(message) + "\n").encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ServerDied(str(e)) from e

    def notify(self, method: str, params: Optional[Dict[str, Any]] = None) -> None:
        self._send({"jsonrpc": "2.0", "method": method, "params": params or {}})

    def request(self, method: str, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        self._next_id += 1
        self._send({"jsonrpc": "2.0", "id": self._next_id, "method": method, "params": params or {}})
        assert self.proc is not None and self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if not line:
            self.proc.wait(timeout=self.timeout)
            raise ServerDied(f"server exited with status {self.proc.returncode}")
        return json.loads(line)

    def call(self, tool: str, args: Dict[str, Any]) -> Dict[str, Any]:
        response = self.request("tools/call", {"name": tool, "arguments": args})
        if "error" in response:
            return {"rpc_error": response["error"]}
        return response["result"]["structuredContent"]

    def close(self) -> int:
        if self.proc is None:
            return 0
        if self.proc.stdin and not self.proc.stdin.closed:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
        try:
            code = self.proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            code = self.proc.wait()
        if self.proc.stdout:
            self.proc.stdout.close()
        return code

    def __enter__(self) -> "ServerProcess":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


def subset_diff(expected: Any, actual: Any, where: str = "$") -> List[str]:
    """Differences between expected and actual, ignoring extra actual fields"""
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            return [f"{where}: expected object, got {type(actual).__name__}"]
        diffs = []
        for key, value in expected.items():
            if key not in actual:
                diffs.append(f"{where}.{key}: missing")
            else:
                diffs.extend(subset_diff(value, actual[key], f"{where}.{key}"))
        return diffs
    if isinstance(expected, list):
        if not isinstance(actual, list) or len(actual) != len(expected):
            return [f"{where}: expected {expected!r}, got {actual!r}"]
        diffs = []
        for i, (e, a) in enumerate(zip(expected, actual)):
            diffs.extend(subset_diff(e, a, f"{where}[{i}]"))
        return diffs
    if expected != actual:
        return [f"{where}: expected {expected!r}, got {actual!r}"]
    return []


def temp_residue(workspace: Path) -> List[str]:
    found = []
    for dirpath, _, filenames in os.walk(workspace):
        for name in filenames:
            if TEMP_MARKER in name:
                found.append(os.path.relpath(os.path.join(dirpath, name), workspace))
    return sorted(found)


def _read(path: Path) -> Optional[bytes]:
    return path.read_bytes() if path.is_file() else None


def _expected_post(step: Step, pre: Optional[bytes]) -> Optional[bytes]:
    content = step.args.get("content")
    if not isinstance(content, str):
        return None
    data = content.encode("utf-8")
    if step.args.get("mode") == "append":
        return (pre or b"") + data
    return data


def _fault_target(workspace: Path, step: Step) -> Optional[Path]:
    if step.tool == "rw.safe_write" and isinstance(step.args.get("path"), str):
        return workspace / step.args["path"]
    if step.tool == "rw.chunk_write":
        return workspace / ".resilient_write" / "chunks" / step.args["session_id"] / f"part-{step.args['index']:03d}.txt"
    return None


def check_journal(workspace: Path, payloads: List[str]) -> List[str]:
    """Every line standalone JSON with sorted keys, seq strictly increasing, no payload text"""
    path = workspace / ".resilient_write" / "journal.jsonl"
    if not path.is_file():
        return []
    failures = []
    last_seq = 0
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            failures.append(f"journal line {number}: not JSON")
            continue
        if list(row) != sorted(row):
            failures.append(f"journal line {number}: keys not sorted")
        if not isinstance(row.get("seq"), int) or row["seq"] <= last_seq:
            failures.append(f"journal line {number}: seq {row.get('seq')} not increasing")
        else:
            last_seq = row["seq"]
        for payload in payloads:
            if payload in line:
                failures.append(f"journal line {number}: contains written payload text")
                break
    return failures


def _setup_workspace(workspace: Path, script: SessionScript) -> None:
    for relative, text in script.setup_files.items():
        target = workspace / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    if script.policy is not None:
        state = workspace / ".resilient_write"
        state.mkdir(parents=True, exist_ok=True)
        (state / "policy.yaml").write_text(yaml.safe_dump(script.policy), encoding="utf-8")


def _run_fault_step(workspace: Path, script: SessionScript, step: Step, fault: Fault, entry: Dict[str, Any]) -> List[str]:
    target = _fault_target(workspace, step)
    pre = _read(target) if target else None
    post = _expected_post(step, pre)

    crashed = ServerProcess(workspace, {**script.env, "RW_TEST_CRASH_PHASE": fault.phase}).start()
    try:
        entry["response"] = crashed.call(step.tool, step.args)
        entry["killed"] = False
    except ServerDied:
        entry["killed"] = True
    finally:
        crashed.close()

    failures = []
    if not entry["killed"]:
        failures.append(f"step {entry['index']}: server was not killed at {fault.phase}")
    if target is not None:
        actual = _read(target)
        if actual != pre and actual != post:
            failures.append(f"step {entry['index']}: {target.name} is neither pre- nor post-state after crash")
        entry["target_state"] = "pre" if actual == pre else "post"
    return failures


def run_script(script: SessionScript, workspace: Optional[Path] = None) -> ScriptResult:
    """Run one script; a fresh temp workspace is created unless one is given"""
    if workspace is None:
        with tempfile.TemporaryDirectory(prefix="rw-harness-") as tmp:
            return run_script(script, Path(tmp))

    workspace = Path(workspace)
    _setup_workspace(workspace, script)
    result = ScriptResult(name=script.name, passed=False)
    payloads = []

    server = ServerProcess(workspace, script.env).start()
    try:
        for index, step in enumerate(script.steps):
            entry: Dict[str, Any] = {"index": index, "tool": step.tool, "args": step.args}
            result.transcript.append(entry)
            if step.tool in WRITE_TOOLS:
                result.write_attempts += 1
            content = step.args.get("content")
            if isinstance(content, str) and len(content) >= 8 and step.tool != "rw.risk_score":
                payloads.append(content)

            fault = script.fault_for(index)
            if fault is not None:
                server.close()
                result.failures.extend(_run_fault_step(workspace, script, step, fault, entry))
                # restarting sweeps temp files left by the killed writer
                server = ServerProcess(workspace, script.env).start()
                residue = temp_residue(workspace)
                if residue:
                    result.failures.append(f"step {index}: temp residue after restart: {residue}")
                continue

            try:
                response = server.call(step.tool, step.args)
            except ServerDied as e:
                result.failures.append(f"step {index}: server died: {e}")
                break
            entry["response"] = response
            diffs = subset_diff(step.expect, response)
            if diffs:
                result.failures.append(f"step {index} ({step.tool}): " + "; ".join(diffs))
    finally:
        exit_code = server.close()

    if exit_code != 0:
        result.failures.append(f"server exited with status {exit_code}")
    for relative, expected in script.expect_files.items():
        actual = _read(workspace / relative)
        wanted = expected.encode("utf-8") if expected is not None else None
        if actual != wanted:
            result.failures.append(f"file {relative}: content differs from expectation")
    if script.expect_write_attempts is not None and result.write_attempts != script.expect_write_attempts:
        result.failures.append(
            f"write attempts {result.write_attempts}, expected {script.expect_write_attempts}"
        )
    result.failures.extend(check_journal(workspace, payloads))

    result.passed = not result.failures
    level = logging.INFO if result.passed else logging.ERROR
    logger.log(level, f"Script {script.name}: {'passed' if result.passed else 'failed'}")
    return result

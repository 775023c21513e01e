"""Format-aware syntax validation for LaTeX, JSON, Python and YAML drafts.

Every checker is a pure function of the content. The LaTeX checker only
claims three things: balanced braces, matched environments and the
presence of \\documentclass.
"""

import ast
import json
import logging
import re
import warnings
from pathlib import PurePosixPath
from typing import List, Optional, Tuple

from .envelope import ErrorKind, ReasonHint, SuggestedAction, ToolError
from .frontmatter import FrontMatterError, safe_subset_load
from .models import Severity, ValidationFormat, ValidationIssue, ValidationReport

logger = logging.getLogger(__name__)

EXTENSIONS = {
    ".tex": ValidationFormat.LATEX,
    ".json": ValidationFormat.JSON,
    ".py": ValidationFormat.PYTHON,
    ".yml": ValidationFormat.YAML,
    ".yaml": ValidationFormat.YAML,
}

VERBATIM_ENVIRONMENTS = frozenset({"verbatim", "verbatim*", "Verbatim", "lstlisting", "minted", "comment"})

_LATEX_SIGNAL = re.compile(r"\\documentclass|\\begin\{")
_PYTHON_SIGNAL = re.compile(r"^(def |async def |class |import |from \S+ import )", re.MULTILINE)
_YAML_KEY = re.compile(r"^[A-Za-z_][\w.-]*\s*:(\s|$)")
_ENV_NAME = re.compile(r"\s*\{([^{}]*)\}")


def _error(line: Optional[int], message: str) -> ValidationIssue:
    return ValidationIssue(line=line, message=message, severity=Severity.ERROR)


def _warning(line: Optional[int], message: str) -> ValidationIssue:
    return ValidationIssue(line=line, message=message, severity=Severity.WARNING)


class LatexChecker:
    """Single pass over the source tracking brace and environment stacks"""

    def __init__(self, content: str):
        self.content = content
        self.pos = 0
        self.line = 1
        self.braces: List[int] = []
        self.environments: List[Tuple[str, int]] = []
        self.issues: List[ValidationIssue] = []
        self.has_documentclass = False

    def _advance(self, n: int = 1) -> None:
        chunk = self.content[self.pos:self.pos + n]
        self.line += chunk.count("\n")
        self.pos += n

    def _skip_to(self, index: int) -> None:
        self._advance(max(0, index - self.pos))

    def _skip_comment(self) -> None:
        end = self.content.find("\n", self.pos)
        self._skip_to(len(self.content) if end < 0 else end)

    def _command(self) -> None:
        self._advance()
        match = re.match(r"[A-Za-z]+\*?", self.content[self.pos:])
        if not match:
            # \{ \} \% \\ and other control symbols
            self._advance()
            return
        name = match.group(0)
        self._advance(len(name))

        if name == "documentclass":
            self.has_documentclass = True
        elif name in ("verb", "verb*"):
            self._skip_verb()
        elif name in ("begin", "end"):
            self._environment(name)

    def _skip_verb(self) -> None:
        if self.pos >= len(self.content):
            return
        delimiter = self.content[self.pos]
        end = self.content.find(delimiter, self.pos + 1)
        newline = self.content.find("\n", self.pos + 1)
        if end < 0 or (0 <= newline < end):
            self.issues.append(_error(self.line, "unterminated \\verb"))
            self._skip_to(len(self.content) if newline < 0 else newline)
            return
        self._skip_to(end + 1)

    def _environment(self, keyword: str) -> None:
        match = _ENV_NAME.match(self.content, self.pos)
        if not match:
            self.issues.append(_error(self.line, f"\\{keyword} without an environment name"))
            return
        name = match.group(1).strip()
        line = self.line
        self._skip_to(match.end())

        if keyword == "begin":
            if name in VERBATIM_ENVIRONMENTS:
                self._skip_verbatim(name, line)
            else:
                self.environments.append((name, line))
            return

        if not self.environments:
            self.issues.append(_error(line, f"\\end{{{name}}} without a matching \\begin"))
            return
        opened, opened_line = self.environments.pop()
        if opened != name:
            self.issues.append(_error(
                line,
                f"environment mismatch: \\begin{{{opened}}} on line {opened_line} closed by \\end{{{name}}}",
            ))

    def _skip_verbatim(self, name: str, line: int) -> None:
        closing = f"\\end{{{name}}}"
        end = self.content.find(closing, self.pos)
        if end < 0:
            self.issues.append(_error(line, f"unterminated {name} environment"))
            self._skip_to(len(self.content))
            return
        self._skip_to(end + len(closing))

    def check(self) -> List[ValidationIssue]:
        content = self.content
        while self.pos < len(content):
            ch = content[self.pos]
            if ch == "\\":
                self._command()
            elif ch == "%":
                self._skip_comment()
            elif ch == "{":
                self.braces.append(self.line)
                self._advance()
            elif ch == "}":
                if self.braces:
                    self.braces.pop()
                else:
                    self.issues.append(_error(self.line, "unmatched closing brace"))
                self._advance()
            else:
                self._advance()

        for line in self.braces:
            self.issues.append(_error(line, "unclosed brace"))
        for name, line in self.environments:
            self.issues.append(_error(line, f"environment {name} is never closed"))
        if not self.has_documentclass:
            self.issues.append(_warning(None, "no \\documentclass found"))
        return self.issues


def validate_latex(content: str) -> List[ValidationIssue]:
    return LatexChecker(content).check()


def validate_json(content: str) -> List[ValidationIssue]:
    try:
        json.loads(content)
    except json.JSONDecodeError as e:
        return [_error(e.lineno, e.msg)]
    return []


def validate_python(content: str) -> List[ValidationIssue]:
    issues = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            ast.parse(content, "<draft>")
        except SyntaxError as e:
            issues.append(_error(e.lineno, e.msg))
        except ValueError as e:
            # null bytes on older interpreters
            issues.append(_error(None, str(e)))
    for w in caught:
        if issubclass(w.category, (SyntaxWarning, DeprecationWarning)):
            issues.append(_warning(w.lineno or None, str(w.message)))
    return issues


def validate_yaml(content: str) -> List[ValidationIssue]:
    try:
        safe_subset_load(content)
    except FrontMatterError as e:
        return [_error(e.line, str(e))]
    return []


CHECKERS = {
    ValidationFormat.LATEX: validate_latex,
    ValidationFormat.JSON: validate_json,
    ValidationFormat.PYTHON: validate_python,
    ValidationFormat.YAML: validate_yaml,
}


def _first_meaningful_line(content: str) -> Optional[str]:
    for line in content.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            return line
    return None


def detect_format(content: str, path_hint: Optional[str] = None) -> ValidationFormat:
    """Extension wins; otherwise json, latex, python, yaml heuristics in order"""
    if path_hint:
        suffix = PurePosixPath(path_hint).suffix.lower()
        if suffix in EXTENSIONS:
            return EXTENSIONS[suffix]

    stripped = content.lstrip()
    if stripped[:1] in ("{", "["):
        return ValidationFormat.JSON
    if _LATEX_SIGNAL.search(content):
        return ValidationFormat.LATEX
    if _PYTHON_SIGNAL.search(content):
        return ValidationFormat.PYTHON
    first = _first_meaningful_line(content)
    if first is not None and (first.rstrip() == "---" or _YAML_KEY.match(first)):
        return ValidationFormat.YAML

    raise ToolError(
        ErrorKind.POLICY_VIOLATION,
        ReasonHint.ENCODING,
        "Could not detect the content format; pass format explicitly",
        suggested_action=SuggestedAction.FIX_ARGS,
        context={"path_hint": path_hint, "formats": [f.value for f in ValidationFormat]},
    )


def validate(content: str, format: Optional[ValidationFormat] = None, path_hint: Optional[str] = None) -> ValidationReport:
    fmt = ValidationFormat(format) if format is not None else detect_format(content, path_hint)
    report = ValidationReport(format=fmt, errors=CHECKERS[fmt](content))
    logger.debug(f"Validated {fmt.value} draft: {len(report.errors)} issue(s)")
    return report

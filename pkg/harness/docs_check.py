"""Keep the shipped docs coherent with the tool catalog and published schemas.

Every ``rw.<tool>`` reference in a Markdown doc must name a registered tool,
and every fenced ``json`` example that looks like an error envelope, a
journal row or a policy must validate against its schema in docs/schemas.
"""

import json
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import jsonschema

from config.settings import ROOT_DIR

logger = logging.getLogger(__name__)

DOCS_DIR = ROOT_DIR / "docs"
SCHEMAS_DIR = DOCS_DIR / "schemas"

TOOL_REF_RE = re.compile(r"(?<![\w.-])rw\.[a-z_]+")
JSON_BLOCK_RE = re.compile(r"^```json[ \t]*\n(.*?)^```", re.MULTILINE | re.DOTALL)

SCHEMA_FILES = {
    "error_envelope": "error_envelope.schema.json",
    "journal_row": "journal_row.schema.json",
    "policy": "policy.schema.json",
}


@dataclass
class DocsReport:
    passed: bool = True
    failures: List[str] = field(default_factory=list)
    references: int = 0
    examples: int = 0

    def fail(self, message: str) -> None:
        self.passed = False
        self.failures.append(message)


def load_schema(kind: str, schemas_dir: Path = SCHEMAS_DIR) -> Dict[str, Any]:
    return json.loads((schemas_dir / SCHEMA_FILES[kind]).read_text(encoding="utf-8"))


def classify_example(example: Any) -> Optional[str]:
    """Which published schema a JSON example claims to follow, if any"""
    if not isinstance(example, dict):
        return None
    if example.get("ok") is False:
        return "error_envelope"
    if "seq" in example and "kind" in example:
        return "journal_row"
    if {"verdict_thresholds", "family_overrides", "retry_budget_default"} & set(example):
        return "policy"
    return None


def _tool_names(catalog: Iterable[Any]) -> set:
    names = set()
    for item in catalog:
        if isinstance(item, str):
            names.add(item)
        elif isinstance(item, dict):
            names.add(item["name"])
        else:
            names.add(item.name)
    return names


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def check_docs(
    catalog: Iterable[Any],
    docs_dir: Path = DOCS_DIR,
    schemas_dir: Optional[Path] = None,
) -> DocsReport:
    names = _tool_names(catalog)
    schemas_dir = schemas_dir or docs_dir / "schemas"
    report = DocsReport()
    schemas: Dict[str, Dict[str, Any]] = {}

    for doc in sorted(Path(docs_dir).rglob("*.md")):
        text = doc.read_text(encoding="utf-8")
        for match in TOOL_REF_RE.finditer(text):
            report.references += 1
            if match.group(0) not in names:
                report.fail(f"{doc.name}:{_line_of(text, match.start())}: unknown tool {match.group(0)}")

        for block in JSON_BLOCK_RE.finditer(text):
            line = _line_of(text, block.start())
            try:
                example = json.loads(block.group(1))
            except json.JSONDecodeError as e:
                report.fail(f"{doc.name}:{line}: json example does not parse: {e.msg}")
                continue
            kind = classify_example(example)
            if kind is None:
                continue
            report.examples += 1
            if kind not in schemas:
                schemas[kind] = load_schema(kind, schemas_dir)
            try:
                jsonschema.validate(instance=example, schema=schemas[kind])
            except jsonschema.ValidationError as e:
                report.fail(f"{doc.name}:{line}: {kind} example invalid: {e.message}")

    for failure in report.failures:
        logger.error(failure)
    return report


def main() -> int:
    from api.endpoints import router

    report = check_docs(router.list_tools())
    for failure in report.failures:
        print(failure, file=sys.stderr)
    print(f"{report.references} tool reference(s), {report.examples} schema example(s): "
          f"{'ok' if report.passed else 'FAILED'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

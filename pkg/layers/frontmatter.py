"""YAML front matter for Markdown documents.

Accepts a safe YAML subset: mappings, sequences, scalars, block scalars and
flow collections. Anchors and aliases are refused outright.
"""

import re
from typing import Any, Dict, Optional, Tuple

import yaml

FRONT_MATTER_RE = re.compile(r"^---\n(.*?)\n---\n(.*)\Z", re.DOTALL)


class FrontMatterError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line


class _BlockDumper(yaml.SafeDumper):
    pass


def _represent_str(dumper: yaml.SafeDumper, value: str):
    if "\n" in value:
        return dumper.represent_scalar("tag:yaml.org,2002:str", value, style="|")
    return dumper.represent_scalar("tag:yaml.org,2002:str", value)


_BlockDumper.add_representer(str, _represent_str)


def reject_anchors(text: str) -> None:
    """Raise FrontMatterError on the first anchor or alias token"""
    try:
        for token in yaml.scan(text, Loader=yaml.SafeLoader):
            if isinstance(token, (yaml.AnchorToken, yaml.AliasToken)):
                kind = "anchor" if isinstance(token, yaml.AnchorToken) else "alias"
                line = token.start_mark.line + 1
                raise FrontMatterError(f"YAML {kind} '{token.value}' is not allowed", line)
    except yaml.YAMLError as e:
        raise FrontMatterError(_yaml_message(e), _yaml_line(e)) from e


def _yaml_line(e: yaml.YAMLError):
    mark = getattr(e, "problem_mark", None) or getattr(e, "context_mark", None)
    return mark.line + 1 if mark is not None else None


def _yaml_message(e: yaml.YAMLError) -> str:
    problem = getattr(e, "problem", None)
    return problem or str(e).splitlines()[0]


def safe_subset_load(text: str) -> Any:
    """yaml.safe_load with anchors and aliases rejected"""
    reject_anchors(text)
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise FrontMatterError(_yaml_message(e), _yaml_line(e)) from e


def fm_dumps(body: str, meta: Dict[str, Any]) -> str:
    metadata = yaml.dump(
        meta,
        Dumper=_BlockDumper,
        sort_keys=False,
        allow_unicode=True,
        default_flow_style=False,
        width=1 << 30,
    )
    return f"---\n{metadata}---\n{body}"


def fm_parse(src: str) -> Tuple[str, Dict[str, Any]]:
    match = FRONT_MATTER_RE.match(src)
    if not match:
        raise FrontMatterError("Document does not start with a '---' delimited front matter block", 1)

    metadata_str, body = match.groups()
    # the delimiter regex consumes the final newline of the metadata
    meta = safe_subset_load(metadata_str + "\n")
    if not isinstance(meta, dict):
        raise FrontMatterError("Front matter is not a YAML mapping", 2)
    return body, meta

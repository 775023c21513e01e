from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple


@dataclass(frozen=True)
class PatternFamily:
    name: str
    weight: float
    patterns: Tuple[str, ...]
    secret: bool = True


# Leading lookbehinds keep each regex linear on long runs of word characters.
API_KEY = PatternFamily(
    name="api_key",
    weight=0.35,
    patterns=(
        r"(?<![A-Za-z0-9_-])sk-ant-[A-Za-z0-9_-]{8,}",
        r"(?<![A-Za-z0-9_-])sk-[A-Za-z0-9]{20,}",
        r"(?<![A-Za-z0-9])AKIA[0-9A-Z]{16}",
        r"(?<![A-Za-z0-9_])dd[a-z]*_[a-f0-9]{32}",
        r"Bearer [A-Za-z0-9._-]{16,}",
    ),
)

GITHUB_PAT = PatternFamily(
    name="github_pat",
    weight=0.35,
    patterns=(r"(?<![A-Za-z0-9_])gh[pousr]_[A-Za-z0-9]{36,}",),
)

JWT = PatternFamily(
    name="jwt",
    weight=0.25,
    patterns=(r"(?<![A-Za-z0-9_-])eyJ[A-Za-z0-9_-]+\.[A-Za-z0-9_-]+\.[A-Za-z0-9_-]+",),
)

PEM_BLOCK = PatternFamily(
    name="pem_block",
    weight=0.50,
    patterns=(r"-----BEGIN [A-Z ]*PRIVATE KEY-----",),
)

# Matched in two steps by the classifier: a key-name token, then a 40-char
# base64 value no more than AWS_CONTEXT_LINES lines away.
AWS_SECRET = PatternFamily(
    name="aws_secret",
    weight=0.40,
    patterns=(
        r"(?i)aws_?secret(?:_?access)?_?key|secret_?access_?key",
        r"(?<![A-Za-z0-9/+=])[A-Za-z0-9/+]{40}(?![A-Za-z0-9/+=])",
    ),
)
AWS_CONTEXT_LINES = 3

PII = PatternFamily(
    name="pii",
    weight=0.15,
    patterns=(
        r"(?<![A-Za-z0-9._%+-])[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
        r"(?<![\d-])\d{3}-\d{2}-\d{4}(?![\d-])",
        r"(?<![\d+])(?:\+1[ .-]?)?(?:\([2-9]\d{2}\)|[2-9]\d{2})[ .-]?[2-9]\d{2}[ .-]\d{4}(?!\d)",
    ),
)

BINARY_HINT = PatternFamily(
    name="binary_hint",
    weight=0.20,
    patterns=(r"(?<![A-Za-z0-9+/])[A-Za-z0-9+/]{201,}={0,2}",),
    secret=False,
)

# Non-printable code points counted by the binary_hint density rule
NON_PRINTABLE = r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f\ufffd]"
BINARY_WINDOW = 1024
BINARY_DENSITY = 0.05

FAMILY_ORDER: Tuple[PatternFamily, ...] = (
    API_KEY, GITHUB_PAT, JWT, PEM_BLOCK, AWS_SECRET, PII, BINARY_HINT,
)

DEFAULT_FAMILIES: Dict[str, PatternFamily] = {f.name: f for f in FAMILY_ORDER}

# Size heuristics
LARGE_CONTENT_BYTES = 100 * 1024
LARGE_CONTENT_DELTA = 0.15
LONG_LINE_CHARS = 2000
LONG_LINE_DELTA = 0.20

"""Pre-flight risk scoring of draft content.

A pure function of (content, policy): regex families plus size heuristics,
combined with sub-linear damping per family and clamped to [0, 1].
"""

import logging
import re
from bisect import bisect_right
from functools import lru_cache
from typing import Dict, List, Optional, Pattern, Tuple

from .models import RiskMatch, RiskReport, SizeIncrement, Verdict
from .patterns import (
    AWS_CONTEXT_LINES,
    AWS_SECRET,
    BINARY_DENSITY,
    BINARY_HINT,
    BINARY_WINDOW,
    DEFAULT_FAMILIES,
    FAMILY_ORDER,
    LARGE_CONTENT_BYTES,
    LARGE_CONTENT_DELTA,
    LONG_LINE_CHARS,
    LONG_LINE_DELTA,
    NON_PRINTABLE,
    PatternFamily,
)
from .workspace import Policy

logger = logging.getLogger(__name__)

SNIPPET_LIMIT = 16
DAMPING_STEP = 0.25
DAMPING_CAP = 1.5

_NON_PRINTABLE_RE = re.compile(NON_PRINTABLE)
_NEWLINE_RE = re.compile("\n")

# matched text -> offset of its first occurrence
Hits = Dict[str, int]


@lru_cache(maxsize=256)
def _compile(patterns: Tuple[str, ...]) -> Tuple[Pattern[str], ...]:
    return tuple(re.compile(p) for p in patterns)


def truncate_snippet(matched_text: str) -> str:
    """First 16 characters of a match; the full secret never leaves the classifier"""
    return matched_text[:SNIPPET_LIMIT]


def family_factor(n_distinct: int) -> float:
    """Damping multiplier for a family with n distinct matches"""
    if n_distinct <= 0:
        return 0.0
    return min(DAMPING_CAP, 1.0 + DAMPING_STEP * (n_distinct - 1))


def verdict_for(score: float, policy: Policy) -> Verdict:
    thresholds = policy.verdict_thresholds
    if score >= thresholds.high:
        return Verdict.HIGH
    if score >= thresholds.medium:
        return Verdict.MEDIUM
    if score >= thresholds.low:
        return Verdict.LOW
    return Verdict.SAFE


def _record(hits: Hits, text: str, offset: int) -> None:
    if text and (text not in hits or offset < hits[text]):
        hits[text] = offset


def _scan_patterns(patterns: Tuple[Pattern[str], ...], content: str, hits: Hits) -> None:
    for regex in patterns:
        for m in regex.finditer(content):
            _record(hits, m.group(0), m.start())


def _scan_aws(content: str, line_starts: List[int], hits: Hits) -> None:
    key_re, value_re = _compile(AWS_SECRET.patterns[:2])
    key_lines = [bisect_right(line_starts, m.start()) for m in key_re.finditer(content)]
    if not key_lines:
        return
    key_lines.sort()
    for m in value_re.finditer(content):
        line = bisect_right(line_starts, m.start())
        i = bisect_right(key_lines, line)
        nearest = [key_lines[j] for j in (i - 1, i) if 0 <= j < len(key_lines)]
        if any(abs(line - k) <= AWS_CONTEXT_LINES for k in nearest):
            _record(hits, m.group(0), m.start())


def _scan_density(content: str, hits: Hits) -> None:
    positions = [m.start() for m in _NON_PRINTABLE_RE.finditer(content)]
    if not positions:
        return
    window = min(BINARY_WINDOW, len(content))
    needed = int(window * BINARY_DENSITY) + 1
    for i in range(len(positions) - needed + 1):
        if positions[i + needed - 1] - positions[i] < window:
            start = positions[i]
            _record(hits, content[start:start + window], start)
            return


def _family_hits(family: PatternFamily, content: str, line_starts: List[int], policy: Policy) -> Hits:
    hits: Hits = {}
    override = policy.family_overrides.get(family.name)
    extra = tuple(override.extra_patterns) if override else ()

    if family is AWS_SECRET:
        _scan_aws(content, line_starts, hits)
        _scan_patterns(_compile(family.patterns[2:] + extra), content, hits)
    else:
        _scan_patterns(_compile(family.patterns + extra), content, hits)

    if family is BINARY_HINT:
        _scan_density(content, hits)
    return hits


def _family_weight(family: PatternFamily, policy: Policy) -> float:
    override = policy.family_overrides.get(family.name)
    if override is not None and override.weight is not None:
        return override.weight
    return family.weight


def _size_increments(content: str) -> List[SizeIncrement]:
    increments = []
    if len(content.encode("utf-8", errors="replace")) > LARGE_CONTENT_BYTES:
        increments.append(SizeIncrement(rule="content_over_100kb", delta=LARGE_CONTENT_DELTA))
    if content and max(map(len, content.split("\n"))) > LONG_LINE_CHARS:
        increments.append(SizeIncrement(rule="line_over_2000_chars", delta=LONG_LINE_DELTA))
    return increments


def suggest_actions(family_counts: Dict[str, int], size_increments: List[SizeIncrement]) -> List[str]:
    actions = []
    if any(DEFAULT_FAMILIES[f].secret for f in family_counts if f in DEFAULT_FAMILIES):
        actions.append("redact")
    if BINARY_HINT.name in family_counts:
        actions.append("scratch_put")
    if size_increments:
        actions.append("chunk")
    return actions


def risk_score(content: str, policy: Optional[Policy] = None, path_hint: Optional[str] = None) -> RiskReport:
    """Score draft content; total and deterministic for identical (content, policy)"""
    policy = policy or Policy()
    line_starts = [0] + [m.end() for m in _NEWLINE_RE.finditer(content)]

    raw = 0.0
    family_counts: Dict[str, int] = {}
    found: List[Tuple[int, RiskMatch]] = []
    for family in FAMILY_ORDER:
        if not policy.family_enabled(family.name):
            continue
        hits = _family_hits(family, content, line_starts, policy)
        if not hits:
            continue
        family_counts[family.name] = len(hits)
        raw += _family_weight(family, policy) * family_factor(len(hits))
        for text, offset in hits.items():
            line = bisect_right(line_starts, offset)
            found.append((offset, RiskMatch(family=family.name, snippet=truncate_snippet(text), line=line)))

    increments = _size_increments(content)
    raw += sum(inc.delta for inc in increments)
    score = min(1.0, max(0.0, raw))

    found.sort(key=lambda item: (item[0], item[1].family))
    report = RiskReport(
        score=score,
        verdict=verdict_for(score, policy),
        matches=[m for _, m in found],
        suggested_actions=suggest_actions(family_counts, increments),
        size_increments=increments,
        family_counts=family_counts,
    )
    if family_counts:
        logger.debug(f"Risk score {score:.4f} ({report.verdict.value}) for {path_hint or '<draft>'}: {family_counts}")
    return report

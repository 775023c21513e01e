from __future__ import annotations

import ast
import json
import random
import string

import pytest
import yaml

from layers.envelope import ReasonHint, ToolError
from layers.models import Severity, ValidationFormat
from layers.validate import detect_format, validate

MINIMAL_DOC = "\\documentclass{article}\n\\begin{document}\nHello\n\\end{document}\n"


def _errors(report):
    return [e for e in report.errors if e.severity is Severity.ERROR]


# --- known cases -------------------------------------------------------------


def test_valid_json():
    report = validate('{"a": [1, 2, 3]}', ValidationFormat.JSON)
    assert report.valid
    assert report.to_dict() == {"valid": True, "format": "json", "errors": []}


def test_invalid_json_reports_line():
    report = validate('{\n  "a": 1,\n  "b": }\n', ValidationFormat.JSON)
    assert not report.valid
    assert report.errors[0].line == 3


def test_python_syntax_error_on_line_one():
    report = validate("def f(:\n    pass\n", ValidationFormat.PYTHON)
    assert not report.valid
    assert report.errors[0].line == 1


def test_python_syntax_warning_is_not_an_error():
    report = validate('pattern = "\\d+"\n', ValidationFormat.PYTHON)
    assert report.valid
    assert any(e.severity is Severity.WARNING for e in report.errors)


@pytest.mark.parametrize("snippet", ["return 1\n", "yield 1\n", "break\n", "nonlocal x\n"])
def test_python_top_level_fragments_agree_with_ast_parse(snippet):
    ast.parse(snippet)
    assert validate(snippet, ValidationFormat.PYTHON).valid


def test_minimal_latex_document_is_clean():
    report = validate(MINIMAL_DOC, ValidationFormat.LATEX)
    assert report.valid
    assert report.errors == []


def test_latex_environment_mismatch_names_both():
    report = validate("\\begin{itemize}\n\\item x\n\\end{enumerate}\n", ValidationFormat.LATEX)
    messages = [e.message for e in _errors(report)]
    assert "environment mismatch: \\begin{itemize} on line 1 closed by \\end{enumerate}" in messages
    assert _errors(report)[0].line == 3


def test_latex_missing_documentclass_is_a_warning():
    report = validate("\\section{Intro}\nText.\n", ValidationFormat.LATEX)
    assert report.valid
    assert [e.severity for e in report.errors] == [Severity.WARNING]


@pytest.mark.parametrize(
    "body",
    [
        "Costs \\{ and \\} are literal.",
        "50\\% of {braces} % a comment with { unbalanced",
        "\\verb|{| and \\verb+}+ are fine",
        "\\begin{verbatim}\n{ \\end{itemize} }\n\\end{verbatim}",
        "\\\\ line break then {group}",
        "\\begin{align*}\na &= b \\\\\n\\end{align*}",
    ],
)
def test_latex_constructs_that_are_balanced(body: str):
    assert validate(f"\\documentclass{{article}}\n{body}\n", ValidationFormat.LATEX).valid


@pytest.mark.parametrize(
    "body,message,line",
    [
        ("{open", "unclosed brace", 2),
        ("close}", "unmatched closing brace", 2),
        ("\\end{itemize}", "\\end{itemize} without a matching \\begin", 2),
        ("\\begin{figure}\ntext", "environment figure is never closed", 2),
        ("\\verb|oops\nmore", "unterminated \\verb", 2),
        ("\\begin{verbatim}\nforever", "unterminated verbatim environment", 2),
    ],
)
def test_latex_faults(body: str, message: str, line: int):
    report = validate(f"\\documentclass{{article}}\n{body}\n", ValidationFormat.LATEX)
    assert not report.valid
    assert (line, message) in [(e.line, e.message) for e in _errors(report)]


def test_yaml_anchors_rejected():
    report = validate("a: &x 1\nb: *x\n", ValidationFormat.YAML)
    assert not report.valid
    assert "anchor" in report.errors[0].message


def test_invalid_yaml_reports_line():
    report = validate("a: 1\nb: [2\nc: 3\n", ValidationFormat.YAML)
    assert not report.valid
    assert report.errors[0].line is not None


# --- format detection --------------------------------------------------------


@pytest.mark.parametrize(
    "path,fmt",
    [("a.tex", "latex"), ("a.json", "json"), ("b/c.py", "python"), ("x.yml", "yaml"), ("X.YAML", "yaml")],
)
def test_extension_wins(path: str, fmt: str):
    assert detect_format("{ whatever", path).value == fmt


@pytest.mark.parametrize(
    "content,fmt",
    [
        ('  {"a": 1}', "json"),
        ("[1, 2]", "json"),
        ("\\documentclass{article}", "latex"),
        ("text\n\\begin{itemize}\n", "latex"),
        ("import os\n", "python"),
        ("from a import b\n", "python"),
        ("def f():\n    return 1\n", "python"),
        ("# comment\nname: value\n", "yaml"),
        ("---\n- a\n", "yaml"),
    ],
)
def test_content_heuristics(content: str, fmt: str):
    assert detect_format(content).value == fmt


def test_undetectable_content_is_an_error():
    with pytest.raises(ToolError) as info:
        detect_format("Just some prose without structure.")
    assert info.value.reason_hint is ReasonHint.ENCODING


def test_validate_tool(call):
    body = call("rw.validate", content="x: [1", path="config.yaml")
    assert body["ok"] is True
    assert body["format"] == "yaml"
    assert body["valid"] is False


def test_validate_tool_undetectable(call):
    body = call("rw.validate", content="prose only")
    assert body["ok"] is False
    assert body["reason_hint"] == "encoding"


# --- generated corpora against reference parsers -----------------------------


def _json_value(rng: random.Random, depth: int = 0):
    kind = rng.randrange(6 if depth < 3 else 4)
    if kind == 0:
        return rng.randint(-1000, 1000)
    if kind == 1:
        return "".join(rng.choice(string.ascii_letters + " é\"\\") for _ in range(rng.randint(0, 8)))
    if kind == 2:
        return rng.choice([True, False, None])
    if kind == 3:
        return rng.random() * 100
    if kind == 4:
        return [_json_value(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {f"k{i}": _json_value(rng, depth + 1) for i in range(rng.randint(0, 4))}


JSON_BREAKERS = [
    lambda s: s + "}",
    lambda s: "{" + s,
    lambda s: s.replace(":", "=", 1) if ":" in s else s + ",",
    lambda s: s[:-1] if len(s) > 1 else "[",
    lambda s: "[" + s + ",]",
    lambda s: "{'single': 1}",
    lambda s: s + " trailing",
]


def _json_corpus():
    rng = random.Random(11)
    valid, invalid = [], []
    for i in range(60):
        text = json.dumps(_json_value(rng), indent=rng.choice([None, 2]), ensure_ascii=False)
        valid.append(text)
        invalid.append(JSON_BREAKERS[i % len(JSON_BREAKERS)](text))
    return valid + invalid


PY_STATEMENTS = [
    "x = {n}",
    "def f{n}(a, b=2):\n    return a + b",
    "class C{n}:\n    value = {n}",
    "for i in range({n}):\n    print(i)",
    "if {n} > 3:\n    y = [i for i in range({n})]\nelse:\n    y = None",
    "with open('f{n}') as fh:\n    data = fh.read()",
    "try:\n    z = 1 / {n}\nexcept ZeroDivisionError:\n    z = 0",
    "async def g{n}():\n    await h()",
    "lam = lambda q: q * {n}",
    "d = {{'k': {n}, **{{}}}}",
    "return {n}",
    "yield {n}",
]

PY_BREAKERS = [
    lambda s: s + "\ndef broken(:\n    pass",
    lambda s: s + "\nx = (1, 2",
    lambda s: s + "\n  indented = 1",
    lambda s: s + "\nif True\n    pass",
    lambda s: s + "\nclass :",
    lambda s: s + "\nx = 1 +",
    lambda s: s + "\nreturn = 5",
]


def _python_corpus():
    rng = random.Random(23)
    valid, invalid = [], []
    for i in range(60):
        parts = [rng.choice(PY_STATEMENTS).format(n=rng.randint(1, 99)) for _ in range(rng.randint(1, 4))]
        text = "\n".join(parts) + "\n"
        valid.append(text)
        invalid.append(PY_BREAKERS[i % len(PY_BREAKERS)](text))
    return valid + invalid


YAML_BREAKERS = [
    lambda s: s + "bad: [unclosed\n",
    lambda s: s + "key: value: other\n",
    lambda s: "a: 1\n  b: 2\n" + s,
    lambda s: s + "- item after mapping\n",
    lambda s: s + 'q: "unterminated\n',
    lambda s: s + "x: {a: 1\n",
]


def _yaml_value(rng: random.Random, depth: int = 0):
    kind = rng.randrange(5 if depth < 2 else 3)
    if kind == 0:
        return rng.randint(0, 500)
    if kind == 1:
        return "".join(rng.choice(string.ascii_letters + " :#-") for _ in range(rng.randint(1, 10)))
    if kind == 2:
        return rng.choice([True, False, None, 1.5])
    if kind == 3:
        return [_yaml_value(rng, depth + 1) for _ in range(rng.randint(1, 3))]
    return {f"k{i}": _yaml_value(rng, depth + 1) for i in range(rng.randint(1, 3))}


def _yaml_corpus():
    rng = random.Random(31)
    valid, invalid = [], []
    for i in range(60):
        doc = {f"key{j}": _yaml_value(rng) for j in range(rng.randint(1, 4))}
        text = yaml.safe_dump(doc, default_flow_style=rng.choice([False, None]))
        valid.append(text)
        invalid.append(YAML_BREAKERS[i % len(YAML_BREAKERS)](text))
    return valid + invalid


def _accepts(reference, text: str) -> bool:
    try:
        reference(text)
    except Exception:
        return False
    return True


@pytest.mark.parametrize(
    "fmt,corpus,reference",
    [
        (ValidationFormat.JSON, _json_corpus, json.loads),
        (ValidationFormat.PYTHON, _python_corpus, ast.parse),
        (ValidationFormat.YAML, _yaml_corpus, yaml.safe_load),
    ],
)
def test_agrees_with_reference_parser(fmt, corpus, reference):
    texts = corpus()
    verdicts = [_accepts(reference, t) for t in texts]
    assert verdicts.count(True) >= 50
    assert verdicts.count(False) >= 50
    for text, expected in zip(texts, verdicts):
        assert validate(text, fmt).valid is expected, text


LATEX_FAULTS = [
    lambda doc, rng: doc.replace("}", "", 1),
    lambda doc, rng: doc.replace("{", "{{", 1),
    lambda doc, rng: doc.replace("\\end{itemize}", "\\end{enumerate}"),
    lambda doc, rng: doc.replace("\\end{itemize}\n", ""),
    lambda doc, rng: doc + "\\end{table}\n",
    lambda doc, rng: doc.replace("\\textbf{", "\\textbf{" * 2, 1),
]


def _latex_doc(rng: random.Random) -> str:
    items = "".join(f"  \\item point \\textbf{{{rng.randint(1, 9)}}}\n" for _ in range(rng.randint(1, 4)))
    return (
        "\\documentclass{article}\n\\begin{document}\n"
        f"\\section{{Part {rng.randint(1, 99)}}}\n"
        f"\\begin{{itemize}}\n{items}\\end{{itemize}}\n"
        "\\end{document}\n"
    )


@pytest.mark.parametrize("case", range(30))
def test_seeded_latex_faults_are_caught(case: int):
    rng = random.Random(case)
    doc = _latex_doc(rng)
    assert validate(doc, ValidationFormat.LATEX).valid
    broken = LATEX_FAULTS[case % len(LATEX_FAULTS)](doc, rng)
    assert not validate(broken, ValidationFormat.LATEX).valid

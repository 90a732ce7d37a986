"""Pull the JSON control object out of free-form agent replies."""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass

from ..errors import DirectiveMalformed, DirectiveNotFound

REQUEST_BLOCKS = "request_blocks"
UNIT_TEST_PASS = "Investigator_unit_test_pass"
INVESTIGATOR_ERROR = "Investigator_error"
DIRECTIVE_KEYS = (REQUEST_BLOCKS, UNIT_TEST_PASS, INVESTIGATOR_ERROR)


@dataclass(frozen=True)
class Directive:
    key: str
    value: object

    def __post_init__(self) -> None:
        if self.key not in DIRECTIVE_KEYS:
            raise ValueError(f"unknown directive key {self.key!r}")


def _brace_spans(text: str) -> list[tuple[int, int]]:
    """Top-level ``{...}`` spans, ignoring braces inside quoted strings."""
    spans = []
    depth = 0
    start = 0
    quote = None
    escaped = False
    for i, c in enumerate(text):
        if quote:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == quote or c == "\n":
                quote = None
            continue
        if c in "\"'" and depth:
            quote = c
        elif c == "{":
            if depth == 0:
                start = i
            depth += 1
        elif c == "}" and depth:
            depth -= 1
            if depth == 0:
                spans.append((start, i + 1))
    return spans


_JSON_WORDS = {"true": "True", "false": "False", "null": "None"}


def parse_loose_object(text: str):
    """Parse JSON, or a Python-literal dict with True/False and single quotes."""
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    fixed = re.sub(r"\b(true|false|null)\b", lambda m: _JSON_WORDS[m.group(1)], text)
    try:
        return ast.literal_eval(fixed)
    except (ValueError, SyntaxError) as exc:
        raise DirectiveMalformed(f"cannot read control object: {exc}") from None


def _as_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise DirectiveMalformed(f"{key} must be a boolean, got {value!r}")


def extract_directive(text: str, key: str) -> Directive:
    """Value of ``key`` from the last JSON-like object in ``text`` that holds it."""
    if key not in DIRECTIVE_KEYS:
        raise ValueError(f"unknown directive key {key!r}")
    for start, end in reversed(_brace_spans(text)):
        chunk = text[start:end]
        if key not in chunk:
            continue
        obj = parse_loose_object(chunk)
        if not isinstance(obj, dict) or key not in obj:
            raise DirectiveMalformed(f"object mentioning {key} does not map it")
        value = obj[key]
        if key == REQUEST_BLOCKS:
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise DirectiveMalformed(f"{key} must be a list of strings")
            return Directive(key, [v.strip() for v in value])
        return Directive(key, _as_bool(key, value))
    raise DirectiveNotFound(f"no {key} object found in agent reply")

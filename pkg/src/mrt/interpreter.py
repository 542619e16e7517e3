"""Infer the expected answer type and coerce raw execution values into it."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import CoercionFailedError
from .gateway import LlmGateway, StageName
from .prompts import render_prompt
from .table import bool_token_value


class AnswerType(str, Enum):
    BOOLEAN = "Boolean"
    NUMBER = "Number"
    CATEGORY = "Category"
    LIST_NUMBER = "ListNumber"
    LIST_CATEGORY = "ListCategory"


@dataclass
class TypedAnswer:
    answer_type: AnswerType
    value: object
    coerced: bool = False


_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")

# Checked in order; list types first so "list of numbers" never matches Number.
_LABEL_RULES: list[tuple[re.Pattern, AnswerType]] = [
    (re.compile(r"list[ _]?number|list\s+of\s+number|numeric\s+list|number\s+list"), AnswerType.LIST_NUMBER),
    (re.compile(r"list[ _]?categor|list[ _]?cat\b|list\s+of\s+(string|categor|text)|string\s+list"), AnswerType.LIST_CATEGORY),
    (re.compile(r"\bboolean\b|\bbool\b|true\s*/?\s*false|yes\s*/?\s*no"), AnswerType.BOOLEAN),
    (re.compile(r"\bnumbers?\b|\bnumeric\b|\bfloat\b|\binteger\b|\bint\b"), AnswerType.NUMBER),
    (re.compile(r"\bcategory\b|\bcategorical\b|\bstring\b|\btext\b|\bstr\b"), AnswerType.CATEGORY),
]


def match_type_label(reply: str) -> AnswerType | None:
    """Case-insensitive match against the five labels and their synonyms."""
    normalized = re.sub(r"[^a-z0-9/ _]", " ", reply.strip().lower())
    normalized = " ".join(normalized.split())
    compact = normalized.replace(" ", "").replace("_", "")
    for answer_type in AnswerType:
        if compact == answer_type.value.lower():
            return answer_type
    for pattern, answer_type in _LABEL_RULES:
        if pattern.search(normalized):
            return answer_type
    return None


def infer_answer_type(
    question: str,
    llm: LlmGateway,
    question_id: str = "",
    template_dir: str | Path | None = None,
) -> tuple[AnswerType, bool]:
    """Ask the interpreter_type stage; one re-ask on an unmatched reply, then
    default to Category. Returns (type, defaulted)."""
    prompt = render_prompt("interpreter_type", {"question": question}, template_dir)
    for _ in range(2):
        reply = llm.chat(StageName.INTERPRETER_TYPE, prompt, question_id=question_id)
        matched = match_type_label(reply)
        if matched is not None:
            return matched, False
    return AnswerType.CATEGORY, True


def split_list_string(text: str) -> list[str]:
    """Comma-split respecting quoted segments; items are trimmed, empties dropped."""
    try:
        fields = next(csv.reader([text], skipinitialspace=True))
    except (csv.Error, StopIteration):
        fields = text.split(",")
    return [f.strip() for f in fields if f.strip()]


def _strip_wrapping(text: str) -> str:
    s = text.strip()
    while len(s) > 1 and s[0] in "'\"" and s[-1] == s[0]:
        s = s[1:-1].strip()
    return s


def _parse_number(value: object) -> int | float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        s = _strip_wrapping(value)
        if _INT_RE.match(s):
            return int(s)
        if _FLOAT_RE.match(s):
            return float(s)
    return None


def _parse_boolean(value: object) -> bool | None:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        return bool_token_value(_strip_wrapping(value))
    return None


def coerce_rules(raw: object, target: AnswerType) -> tuple[object, bool]:
    """Deterministic coercion pass. Returns (value, ok)."""
    if isinstance(raw, tuple):
        raw = list(raw)
    if target == AnswerType.BOOLEAN:
        if isinstance(raw, list) and len(raw) == 1:
            raw = raw[0]
        parsed = _parse_boolean(raw)
        return (parsed, True) if parsed is not None else (None, False)
    if target == AnswerType.NUMBER:
        if isinstance(raw, list) and len(raw) == 1:
            raw = raw[0]
        parsed = _parse_number(raw)
        return (parsed, True) if parsed is not None else (None, False)
    if target == AnswerType.CATEGORY:
        if isinstance(raw, list) and len(raw) == 1:
            raw = raw[0]
        if isinstance(raw, str):
            return raw, True
        if isinstance(raw, (bool, int, float)):
            return str(raw), True
        return None, False
    if target == AnswerType.LIST_NUMBER:
        if isinstance(raw, str):
            raw = split_list_string(_strip_wrapping(raw))
        elif isinstance(raw, (bool,)):
            return None, False
        elif isinstance(raw, (int, float)):
            raw = [raw]
        if not isinstance(raw, list):
            return None, False
        parsed_items = [_parse_number(item) for item in raw]
        if any(p is None for p in parsed_items):
            return None, False
        return parsed_items, True
    if target == AnswerType.LIST_CATEGORY:
        if isinstance(raw, str):
            raw = split_list_string(_strip_wrapping(raw))
        elif isinstance(raw, (bool, int, float)):
            raw = [raw]
        if not isinstance(raw, list):
            return None, False
        items = []
        for item in raw:
            if isinstance(item, str):
                items.append(item.strip())
            elif isinstance(item, (bool, int, float)):
                items.append(str(item))
            else:
                return None, False
        return items, True
    return None, False


def shape_matches(value: object, target: AnswerType) -> bool:
    if target == AnswerType.BOOLEAN:
        return isinstance(value, bool)
    if target == AnswerType.NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if target == AnswerType.CATEGORY:
        return isinstance(value, str)
    if target == AnswerType.LIST_NUMBER:
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    if target == AnswerType.LIST_CATEGORY:
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    return False


def _values_equal(a: object, b: object) -> bool:
    if type(a) is not type(b):
        return False
    return a == b


def coerce_answer(
    raw: object,
    target: AnswerType,
    llm: LlmGateway,
    question_id: str = "",
    template_dir: str | Path | None = None,
) -> TypedAnswer:
    """Rule-based coercion first; when the rules fail, one interpreter_coerce
    call rewrites the value and the same rules parse the rewrite."""
    value, ok = coerce_rules(raw, target)
    if not ok:
        prompt = render_prompt(
            "interpreter_coerce",
            {"value": json.dumps(raw, ensure_ascii=False, default=str), "target_type": target.value},
            template_dir,
        )
        reply = llm.chat(StageName.INTERPRETER_COERCE, prompt, question_id=question_id).strip()
        if reply.startswith("```"):
            reply = re.sub(r"^```[a-zA-Z0-9_+-]*\s*|\s*```$", "", reply).strip()
        try:
            rewritten: object = json.loads(reply)
        except ValueError:
            rewritten = reply
        value, ok = coerce_rules(rewritten, target)
    if not ok:
        raise CoercionFailedError(raw, target.value)
    return TypedAnswer(answer_type=target, value=value, coerced=not _values_equal(raw, value))

"""Turn a question plus a table profile into an ordered instruction plan."""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyPlanError
from .gateway import LlmGateway, StageName
from .profiler import ColumnProfile, TableProfile
from .prompts import render_prompt

DEFAULT_UNIQUE_LISTING_THRESHOLD = 7
DEFAULT_MAX_STEPS = 12

_MARKER = re.compile(r"^\s*(?:\d{1,3}\s*[.)\]:]|\(\d{1,3}\)|[-*•‣▪])\s+")
_QUOTES = ("'", '"')


@dataclass
class InstructionPlan:
    question_id: str
    steps: list[str] = field(default_factory=list)
    refined: bool = False
    truncated: bool = False


def _format_value(value) -> str:
    return str(value)


def _column_line(profile: ColumnProfile, unique_listing_threshold: int) -> str:
    description = " ".join(profile.description.split()) or profile.name
    parts = [f"type: {profile.type_label}", f"missing: {profile.missing_values}"]
    if profile.mean is not None or profile.min is not None:
        parts.append(f"range [{_format_value(profile.min)}, {_format_value(profile.max)}]")
    elif profile.freq_values is not None:
        if profile.distinct_values is not None and profile.unique < unique_listing_threshold:
            listed = ", ".join(_format_value(v) for v in profile.distinct_values)
            parts.append(f"values: {listed}")
        else:
            listed = ", ".join(f"{_format_value(v)} ({c})" for v, c in profile.freq_values)
            parts.append(f"frequent: {listed}")
    return f"- `{profile.name}`: {description} ({'; '.join(parts)})"


def build_column_block(
    profile: TableProfile,
    unique_listing_threshold: int = DEFAULT_UNIQUE_LISTING_THRESHOLD,
) -> str:
    """One line per column: name, description, type, missing flag, and either
    the numeric range or the column's values (all of them below the listing
    threshold, otherwise the most frequent ones)."""
    return "\n".join(
        _column_line(p, unique_listing_threshold) for p in profile.column_profiles
    )


def _strip_quotes(text: str) -> str:
    while len(text) > 1 and text[0] in _QUOTES and text[-1] == text[0]:
        text = text[1:-1].strip()
    return text


def _clean_step(line: str) -> tuple[str, bool]:
    had_marker = bool(_MARKER.match(line))
    line = _MARKER.sub("", line, count=1)
    line = _strip_quotes(line.strip()).strip()
    return line, had_marker


def parse_instruction_list(text: str) -> list[str]:
    """Split a model reply into instruction steps.

    Strips enumeration markers, bullets, fences, and surrounding quotes; drops
    empty lines and prose preambles (an unmarked line ending in ':' that
    precedes marked lines). Returns possibly-empty list, order preserved.
    """
    text = text.strip()
    if not text:
        return []
    # Some models reply with a literal list of strings.
    if text.startswith("[") and text.endswith("]"):
        try:
            literal = ast.literal_eval(text)
        except (ValueError, SyntaxError):
            literal = None
        if isinstance(literal, (list, tuple)) and all(isinstance(s, str) for s in literal):
            steps = [_strip_quotes(_MARKER.sub("", s.strip(), count=1)).strip() for s in literal]
            return [s for s in steps if s]

    cleaned: list[tuple[str, bool]] = []
    for raw in text.splitlines():
        if raw.strip().startswith("```"):
            continue
        step, had_marker = _clean_step(raw)
        if step:
            cleaned.append((step, had_marker))

    any_marked_after = [False] * len(cleaned)
    marked_later = False
    for i in range(len(cleaned) - 1, -1, -1):
        any_marked_after[i] = marked_later
        marked_later = marked_later or cleaned[i][1]

    steps = []
    for i, (step, had_marker) in enumerate(cleaned):
        if not had_marker and step.endswith(":") and any_marked_after[i]:
            continue  # prose preamble before an enumerated list
        steps.append(step)
    return steps


def draft_instructions(
    question: str,
    profile: TableProfile,
    llm: LlmGateway,
    question_id: str = "",
    unique_listing_threshold: int = DEFAULT_UNIQUE_LISTING_THRESHOLD,
    template_dir: str | Path | None = None,
) -> str:
    """First explainer pass: ask for the raw step list."""
    prompt = render_prompt(
        "explainer",
        {
            "question": question,
            "column_block": build_column_block(profile, unique_listing_threshold),
        },
        template_dir,
    )
    return llm.chat(StageName.EXPLAINER, prompt, question_id=question_id)


def refine_instructions(
    question: str,
    profile: TableProfile,
    draft_text: str,
    llm: LlmGateway,
    question_id: str = "",
    unique_listing_threshold: int = DEFAULT_UNIQUE_LISTING_THRESHOLD,
    max_steps: int = DEFAULT_MAX_STEPS,
    template_dir: str | Path | None = None,
) -> InstructionPlan:
    """Second explainer pass: review the draft, then parse the final plan.

    Falls back to the draft's parse when the refined reply parses to nothing.
    """
    prompt = render_prompt(
        "explainer_refine",
        {
            "question": question,
            "column_block": build_column_block(profile, unique_listing_threshold),
            "draft": draft_text,
        },
        template_dir,
    )
    refined_reply = llm.chat(StageName.EXPLAINER_REFINE, prompt, question_id=question_id)

    refined_steps = parse_instruction_list(refined_reply)
    if refined_steps:
        steps, refined = refined_steps, True
    else:
        steps, refined = parse_instruction_list(draft_text), False
    if not steps:
        raise EmptyPlanError(f"no instructions parsed for question '{question_id or question}'")

    truncated = len(steps) > max_steps
    return InstructionPlan(
        question_id=question_id,
        steps=steps[:max_steps],
        refined=refined,
        truncated=truncated,
    )


def generate_instructions(
    question: str,
    profile: TableProfile,
    llm: LlmGateway,
    question_id: str = "",
    unique_listing_threshold: int = DEFAULT_UNIQUE_LISTING_THRESHOLD,
    max_steps: int = DEFAULT_MAX_STEPS,
    template_dir: str | Path | None = None,
) -> InstructionPlan:
    """Generate then refine the instruction plan for one question."""
    draft = draft_instructions(
        question, profile, llm, question_id, unique_listing_threshold, template_dir
    )
    return refine_instructions(
        question, profile, draft, llm, question_id,
        unique_listing_threshold, max_steps, template_dir,
    )

"""Translate an instruction plan into a single dataframe function; repair bad replies."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import NoCodeFoundError, RepairExhaustedError
from .explainer import InstructionPlan, build_column_block
from .gateway import LlmGateway, StageName
from .profiler import TableProfile
from .prompts import render_prompt

DEFAULT_MAX_REPAIR_ATTEMPTS = 4
FUNCTION_NAME = "parse_dataframe"
GROUPBY_TOKEN = ".groupby("

_FENCE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)```", re.S)
_DEF_LINE = re.compile(r"^\s*def\s+parse_dataframe\s*\(")
_TOP_DEF = re.compile(r"^(?:async\s+)?def\s+(\w+)\s*\(")
_TOP_IMPORT = re.compile(r"^(?:import|from)\s+\S")


@dataclass
class CodeArtifact:
    source: str
    attempts: int
    repaired: bool
    syntax_ok: bool


def numbered_instructions(plan: InstructionPlan) -> str:
    return "\n".join(f"{i}. {step}" for i, step in enumerate(plan.steps, start=1))


def build_coder_prompt(
    plan: InstructionPlan,
    profile: TableProfile,
    template_dir: str | Path | None = None,
) -> str:
    """Numbered instructions, exact column names with types, and the guidelines."""
    if not plan.steps:
        raise ValueError("instruction plan is empty")
    return render_prompt(
        "coder",
        {
            "instructions": numbered_instructions(plan),
            "column_block": build_column_block(profile),
        },
        template_dir,
    )


def _normalize(code: str) -> str:
    code = code.replace("\r\n", "\n").replace("\r", "\n")
    code = code.replace("\t", "    ")
    return code.strip("\n") + "\n" if code.strip() else ""


def extract_code(reply: str) -> str:
    """First fenced block if any, else the suffix starting at the first
    parse_dataframe definition. Line endings and tabs are normalized."""
    match = _FENCE.search(reply)
    if match:
        return _normalize(match.group(1))
    lines = reply.splitlines()
    for i, line in enumerate(lines):
        if _DEF_LINE.match(line):
            return _normalize("\n".join(lines[i:]))
    raise NoCodeFoundError("reply contains no code fence and no parse_dataframe definition")


def _split_top_level_groups(lines: list[str]) -> list[list[str]]:
    """Group lines into top-level statements: an indent-0 line plus its
    indented continuation block (decorators attach to the def below them)."""
    groups: list[list[str]] = []
    current: list[str] = []
    pending_decorators: list[str] = []
    for line in lines:
        stripped = line.strip()
        indent0 = bool(stripped) and not line[:1].isspace()
        if indent0 and stripped.startswith("@"):
            pending_decorators.append(line)
            continue
        if indent0:
            if current:
                groups.append(current)
            current = pending_decorators + [line]
            pending_decorators = []
        else:
            if current:
                current.append(line)
            elif stripped:
                # indented line before any top-level statement: keep as its own
                # group so the syntax check can reject it
                current = [line]
    if pending_decorators:
        groups.append(pending_decorators)
    if current:
        groups.append(current)
    return groups


def _group_kind(group: list[str]) -> str:
    head = next((l for l in group if l.strip() and not l.strip().startswith("@")), "")
    stripped = head.strip()
    match = _TOP_DEF.match(stripped)
    if match:
        return "def:" + match.group(1)
    if _TOP_IMPORT.match(stripped):
        return "import"
    return "other"


def _parameter_count(source: str, def_index: int) -> int | None:
    """Count top-level parameters in the def signature starting at def_index."""
    start = source.find("(", def_index)
    if start < 0:
        return None
    depth = 0
    in_string: str | None = None
    escaped = False
    params = [""]
    for ch in source[start:]:
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == in_string:
                in_string = None
            continue
        if ch in "'\"":
            in_string = ch
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth == 0:
                break
        elif ch == "," and depth == 1:
            params.append("")
            continue
        if depth >= 1 and not (ch == "(" and depth == 1):
            params[-1] += ch
    cleaned = [p.strip() for p in params if p.strip()]
    return len(cleaned)


def validate_and_strip(code: str) -> tuple[str | None, str | None]:
    """Structural validation of a candidate.

    Returns (cleaned_source, None) on success or (None, diagnostic) on
    failure. Top-level statements other than imports and the single
    parse_dataframe definition are stripped, not rejected.
    """
    code = _normalize(code)
    if not code.strip():
        return None, f"no {FUNCTION_NAME} function found"
    groups = _split_top_level_groups(code.split("\n"))
    kinds = [_group_kind(g) for g in groups]

    target = f"def:{FUNCTION_NAME}"
    n_target = kinds.count(target)
    if n_target == 0:
        return None, f"no {FUNCTION_NAME} function found"
    if n_target > 1:
        return None, f"multiple {FUNCTION_NAME} definitions"
    other_defs = [k.split(":", 1)[1] for k in kinds if k.startswith("def:") and k != target]
    if other_defs:
        return None, (
            "code must define one single function; extra top-level "
            f"function(s): {', '.join(other_defs)}"
        )

    kept: list[str] = []
    for group, kind in zip(groups, kinds):
        if kind == "import" or kind == target:
            kept.extend(group)
    cleaned = _normalize("\n".join(kept))

    def_match = re.search(r"def\s+parse_dataframe", cleaned)
    n_params = _parameter_count(cleaned, def_match.start()) if def_match else None
    if n_params != 1:
        return None, f"{FUNCTION_NAME} must take exactly one parameter, found {n_params}"
    if re.search(r"def\s+parse_dataframe\s*\(\s*\*", cleaned):
        return None, f"{FUNCTION_NAME} must take exactly one plain parameter"
    if GROUPBY_TOKEN in cleaned:
        return None, "uses a group-by operation, which is not allowed"
    return cleaned, None


def check_and_repair(
    candidate: str,
    llm: LlmGateway,
    harness,
    max_repair_attempts: int = DEFAULT_MAX_REPAIR_ATTEMPTS,
    question_id: str = "",
    template_dir: str | Path | None = None,
) -> CodeArtifact:
    """Validate and syntax-check the candidate, looping through the repair
    stage at most max_repair_attempts times."""
    attempts = 0
    repairs = 0
    while True:
        attempts += 1
        cleaned, diagnostic = validate_and_strip(candidate)
        if diagnostic is None:
            reply = harness.check(cleaned)
            if reply.ok:
                return CodeArtifact(
                    source=cleaned,
                    attempts=attempts,
                    repaired=repairs > 0,
                    syntax_ok=True,
                )
            diagnostic = f"{reply.error_type}: {reply.error_message}"
        if repairs >= max_repair_attempts:
            raise RepairExhaustedError(diagnostic)
        repairs += 1
        prompt = render_prompt(
            "coder_repair", {"code": candidate, "diagnostic": diagnostic}, template_dir
        )
        repair_reply = llm.chat(StageName.CODER_REPAIR, prompt, question_id=question_id)
        try:
            candidate = extract_code(repair_reply)
        except NoCodeFoundError:
            candidate = ""


@dataclass
class Coder:
    """Code-generation entry point used by the pipeline and the retry loop."""

    max_repair_attempts: int = DEFAULT_MAX_REPAIR_ATTEMPTS
    template_dir: str | Path | None = None

    def generate(
        self,
        plan: InstructionPlan,
        profile: TableProfile,
        llm: LlmGateway,
        harness,
        question_id: str = "",
        error_feedback: str | None = None,
    ) -> CodeArtifact:
        prompt = build_coder_prompt(plan, profile, self.template_dir)
        if error_feedback:
            prompt += (
                "\n\nThe previously generated code failed when executed. "
                "The exception was:\n"
                f"{error_feedback}\n"
                "Generate a corrected function that avoids this error."
            )
        reply = llm.chat(StageName.CODER, prompt, question_id=question_id)
        try:
            candidate = extract_code(reply)
        except NoCodeFoundError:
            candidate = ""
        return check_and_repair(
            candidate,
            llm,
            harness,
            max_repair_attempts=self.max_repair_attempts,
            question_id=question_id,
            template_dir=self.template_dir,
        )

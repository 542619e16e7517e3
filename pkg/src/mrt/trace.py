"""Per-question provenance records: JSON-lines sink, annotation, tallies."""
from __future__ import annotations

import json
import os
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UnknownQuestionIdError

TRACE_FILE_NAME = "traces.jsonl"

ERROR_CATEGORIES = (
    "wrong_cell_value_filtering",
    "wrong_instructions",
    "wrong_code",
    "formatting_transformations",
    "formatting_answer_type",
    "other",
)

FLAG_NAMES = ("fallback_description", "type_default", "coercion_failed", "plan_truncated")


def empty_flags() -> dict[str, bool]:
    return dict.fromkeys(FLAG_NAMES, False)


@dataclass
class PipelineTrace:
    question_id: str
    question: str
    table_name: str
    timings_ms: dict[str, float] = field(default_factory=dict)
    plan_steps: list[str] | None = None
    plan_refined: bool | None = None
    code_artifacts: list[dict] = field(default_factory=list)
    outcomes: list[dict] = field(default_factory=list)
    runtime_retries: int = 0
    answer_type: str | None = None
    raw_value: object = None
    interpreted_value: object = None
    formatted_value: object = None
    flags: dict[str, bool] = field(default_factory=empty_flags)
    llm_calls: list[int] = field(default_factory=list)
    error: str | None = None
    error_category: str | None = None

    def to_json_dict(self) -> dict:
        # field order is fixed so trace files diff cleanly
        return {
            "question_id": self.question_id,
            "question": self.question,
            "table_name": self.table_name,
            "timings_ms": self.timings_ms,
            "plan_steps": self.plan_steps,
            "plan_refined": self.plan_refined,
            "code_artifacts": self.code_artifacts,
            "outcomes": self.outcomes,
            "runtime_retries": self.runtime_retries,
            "answer_type": self.answer_type,
            "raw_value": self.raw_value,
            "interpreted_value": self.interpreted_value,
            "formatted_value": self.formatted_value,
            "flags": self.flags,
            "llm_calls": self.llm_calls,
            "error": self.error,
            "error_category": self.error_category,
        }


class TraceSink:
    """Append-only traces.jsonl writer; whole lines only, safe across threads."""

    def __init__(self, out_dir: str | Path):
        self.path = Path(out_dir) / TRACE_FILE_NAME
        self._lock = threading.Lock()

    def write(self, trace: PipelineTrace) -> Path:
        line = json.dumps(trace.to_json_dict(), ensure_ascii=False) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
        return self.path


def write_trace(trace: PipelineTrace, sink: str | Path | TraceSink) -> Path:
    if not isinstance(sink, TraceSink):
        sink = TraceSink(sink)
    return sink.write(trace)


def read_traces(trace_file: str | Path) -> list[dict]:
    out = []
    with open(trace_file, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def annotate_error(trace_file: str | Path, question_id: str, category: str) -> Path:
    """Set error_category on every trace line for the question; last annotation
    wins. The file is rewritten atomically and left untouched on error."""
    if category not in ERROR_CATEGORIES:
        raise ValueError(
            f"unknown error category '{category}'; expected one of {', '.join(ERROR_CATEGORIES)}"
        )
    trace_file = Path(trace_file)
    lines = trace_file.read_text(encoding="utf-8").splitlines()
    found = False
    updated: list[str] = []
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("question_id") == question_id:
            obj["error_category"] = category
            found = True
            updated.append(json.dumps(obj, ensure_ascii=False))
        else:
            updated.append(line)
    if not found:
        raise UnknownQuestionIdError(question_id)
    fd, tmp = tempfile.mkstemp(dir=trace_file.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write("\n".join(updated) + "\n")
    os.replace(tmp, trace_file)
    return trace_file


def tally_errors(trace_file: str | Path) -> tuple[Counter, int]:
    """Counts per error category plus the total number of traces."""
    traces = read_traces(trace_file)
    counts: Counter = Counter()
    for obj in traces:
        category = obj.get("error_category")
        if category:
            counts[category] += 1
    return counts, len(traces)

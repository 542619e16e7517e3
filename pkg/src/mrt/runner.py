"""Execute accepted code in the harness and drive the exception-feedback loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from .coder import CodeArtifact, Coder
from .errors import HarnessCrashedError, NoCodeFoundError, RepairExhaustedError
from .explainer import InstructionPlan
from .gateway import LlmGateway
from .harness_client import Harness, HarnessTimeout
from .profiler import TableProfile

DEFAULT_MAX_RUNTIME_RETRIES = 3
DEFAULT_TIMEOUT_S = 30.0

VALUE_KINDS = ("bool", "int", "float", "string", "list", "null", "other")


@dataclass
class ExecutionOutcome:
    ok: bool
    value: object = None
    value_kind: str = "null"
    error_type: str | None = None
    error_message: str | None = None
    traceback: str | None = None
    wall_ms: int = 0

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "value": self.value,
            "value_kind": self.value_kind,
            "error_type": self.error_type,
            "error_message": self.error_message,
            "traceback": self.traceback,
            "wall_ms": self.wall_ms,
        }


@dataclass
class RunResult:
    outcome: ExecutionOutcome
    code_used: CodeArtifact | None
    runtime_retries: int
    artifacts: list[CodeArtifact] = field(default_factory=list)
    outcomes: list[ExecutionOutcome] = field(default_factory=list)


def _kind_of(value: object) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    return "other"


def execute(
    code: CodeArtifact,
    table_path: str | Path,
    harness: Harness,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> ExecutionOutcome:
    """One harness run. A timeout kills the process and is reported as a normal
    failed outcome; a crash (no protocol reply) raises HarnessCrashedError."""
    if not code.syntax_ok:
        raise ValueError("refusing to execute code that failed the syntax check")
    started = time.perf_counter()
    try:
        reply = harness.run(code.source, str(table_path), timeout_s)
    except HarnessTimeout:
        wall_ms = int((time.perf_counter() - started) * 1000)
        return ExecutionOutcome(
            ok=False,
            error_type="Timeout",
            error_message=f"execution exceeded {timeout_s} s",
            wall_ms=wall_ms,
        )
    wall_ms = int((time.perf_counter() - started) * 1000)
    if reply.ok:
        return ExecutionOutcome(
            ok=True,
            value=reply.value,
            value_kind=reply.value_kind or _kind_of(reply.value),
            wall_ms=wall_ms,
        )
    return ExecutionOutcome(
        ok=False,
        error_type=reply.error_type or "Error",
        error_message=reply.error_message or "",
        traceback=reply.traceback,
        wall_ms=wall_ms,
    )


def _feedback(outcome: ExecutionOutcome) -> str:
    text = f"{outcome.error_type}: {outcome.error_message}"
    if outcome.traceback:
        text += "\n" + outcome.traceback
    return text


def run_with_retries(
    plan: InstructionPlan,
    profile: TableProfile,
    table_path: str | Path,
    coder: Coder,
    llm: LlmGateway,
    harness: Harness,
    max_runtime_retries: int = DEFAULT_MAX_RUNTIME_RETRIES,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    question_id: str = "",
) -> RunResult:
    """Generate, execute, and on failure regenerate with the exception appended
    to the coder prompt, up to max_runtime_retries regenerations.

    Failure is a value: the last outcome is always returned so the pipeline can
    still emit a trace.
    """
    retries = 0
    feedback: str | None = None
    artifacts: list[CodeArtifact] = []
    outcomes: list[ExecutionOutcome] = []
    last_artifact: CodeArtifact | None = None
    while True:
        try:
            artifact = coder.generate(
                plan, profile, llm, harness,
                question_id=question_id, error_feedback=feedback,
            )
        except (RepairExhaustedError, NoCodeFoundError) as exc:
            outcome = ExecutionOutcome(
                ok=False,
                error_type="RepairExhausted",
                error_message=str(exc),
            )
            outcomes.append(outcome)
            return RunResult(outcome, last_artifact, retries, artifacts, outcomes)
        last_artifact = artifact
        artifacts.append(artifact)
        try:
            outcome = execute(artifact, table_path, harness, timeout_s)
        except HarnessCrashedError as exc:
            outcome = ExecutionOutcome(
                ok=False,
                error_type="HarnessCrashed",
                error_message=str(exc),
            )
        outcomes.append(outcome)
        if outcome.ok or retries >= max_runtime_retries:
            return RunResult(outcome, artifact, retries, artifacts, outcomes)
        retries += 1
        feedback = _feedback(outcome)

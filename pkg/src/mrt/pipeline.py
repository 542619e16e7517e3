"""Pipeline driver: the full stage sequence for one question, plus the two
batch execution modes (sequential per question, or stage-batched so every
question finishes stage k before stage k+1 begins)."""
from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .coder import Coder
from .config import RunConfig
from .errors import (
    CoercionFailedError,
    EmptyPlanError,
    LlmUnavailableError,
    MrtError,
    ReplayExhaustedError,
)
from .explainer import InstructionPlan, draft_instructions, refine_instructions
from .formatter import format_answer
from .gateway import LlmGateway
from .harness_client import Harness
from .interpreter import AnswerType, TypedAnswer, coerce_answer, infer_answer_type
from .profiler import ProfileCache, TableProfile, profile_table
from .runner import RunResult, run_with_retries
from .table import Table, load_table
from .trace import PipelineTrace, TraceSink, empty_flags

log = logging.getLogger(__name__)


@dataclass
class QuestionSpec:
    question_id: str
    table_path: Path
    question: str
    answer_type: str | None = None


def read_manifest(path: str | Path) -> list[QuestionSpec]:
    """JSON-lines manifest: {question_id, table, question, answer_type?}.
    Table paths resolve relative to the manifest file."""
    path = Path(path)
    base = path.parent
    out: list[QuestionSpec] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            table = Path(obj["table"])
            if not table.is_absolute():
                table = base / table
            out.append(
                QuestionSpec(
                    question_id=str(obj["question_id"]),
                    table_path=table,
                    question=obj["question"],
                    answer_type=obj.get("answer_type"),
                )
            )
    return out


@dataclass
class _QuestionState:
    spec: QuestionSpec
    table: Table | None = None
    profile: TableProfile | None = None
    draft: str | None = None
    plan: InstructionPlan | None = None
    run_result: RunResult | None = None
    answer_type: AnswerType | None = None
    interpreted: TypedAnswer | None = None
    formatted: TypedAnswer | None = None
    flags: dict = None
    timings: dict = None
    error: str | None = None

    def __post_init__(self):
        self.flags = empty_flags()
        self.timings = {}

    def fail(self, stage: str, exc: Exception) -> None:
        # transport-level gateway failures are run-level, not per-question
        if isinstance(exc, (LlmUnavailableError, ReplayExhaustedError)):
            raise exc
        if self.error is None:
            self.error = f"{stage}: {exc}"


class PipelineDriver:
    """Owns the run: table/profile caches, a harness per worker, trace sink."""

    def __init__(
        self,
        config: RunConfig,
        gateway: LlmGateway,
        trace_sink: TraceSink | None = None,
    ):
        self.config = config
        self.gateway = gateway
        self.cache = ProfileCache(config.cache_dir)
        self.trace_sink = trace_sink
        self.coder = Coder(
            max_repair_attempts=config.max_repair_attempts,
            template_dir=config.template_dir,
        )
        self._tables: dict[str, Table] = {}
        self._tables_lock = threading.Lock()
        self._local = threading.local()
        self._harnesses: list[Harness] = []
        self._harnesses_lock = threading.Lock()

    # -- resources ---------------------------------------------------------

    def harness(self) -> Harness:
        h = getattr(self._local, "harness", None)
        if h is None:
            h = Harness(self.config.harness_cmd)
            self._local.harness = h
            with self._harnesses_lock:
                self._harnesses.append(h)
        return h

    def close(self) -> None:
        with self._harnesses_lock:
            for h in self._harnesses:
                h.close()
            self._harnesses.clear()

    def __enter__(self) -> "PipelineDriver":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def load(self, table_path: Path) -> Table:
        key = str(Path(table_path).resolve())
        with self._tables_lock:
            table = self._tables.get(key)
        if table is None:
            table = load_table(table_path)
            with self._tables_lock:
                self._tables[key] = table
        return table

    # -- stages ------------------------------------------------------------

    def _timed(self, state: _QuestionState, stage: str, fn):
        started = time.perf_counter()
        try:
            return fn()
        finally:
            state.timings[stage] = round((time.perf_counter() - started) * 1000, 3)

    def _stage_profile(self, state: _QuestionState) -> None:
        def work():
            state.table = self.load(state.spec.table_path)
            state.profile = profile_table(
                state.table,
                self.cache,
                self.gateway,
                top_k=self.config.top_k,
                max_rows=self.config.max_rows,
                max_cell_chars=self.config.max_cell_chars,
                template_dir=self.config.template_dir,
            )
            state.flags["fallback_description"] = state.profile.fallback_descriptions

        try:
            self._timed(state, "profile", work)
        except (OSError, MrtError, ValueError) as exc:
            state.fail("profile", exc)

    def _stage_draft(self, state: _QuestionState) -> None:
        if state.error:
            return
        try:
            state.draft = self._timed(
                state,
                "explain_draft",
                lambda: draft_instructions(
                    state.spec.question,
                    state.profile,
                    self.gateway,
                    question_id=state.spec.question_id,
                    unique_listing_threshold=self.config.unique_listing_threshold,
                    template_dir=self.config.template_dir,
                ),
            )
        except MrtError as exc:
            state.fail("explain", exc)

    def _stage_refine(self, state: _QuestionState) -> None:
        if state.error:
            return
        try:
            state.plan = self._timed(
                state,
                "explain_refine",
                lambda: refine_instructions(
                    state.spec.question,
                    state.profile,
                    state.draft,
                    self.gateway,
                    question_id=state.spec.question_id,
                    unique_listing_threshold=self.config.unique_listing_threshold,
                    max_steps=self.config.max_steps,
                    template_dir=self.config.template_dir,
                ),
            )
            state.flags["plan_truncated"] = state.plan.truncated
        except EmptyPlanError as exc:
            state.fail("explain", exc)
        except MrtError as exc:
            state.fail("explain", exc)

    def _stage_code_run(self, state: _QuestionState) -> None:
        if state.error:
            return

        def work():
            return run_with_retries(
                state.plan,
                state.profile,
                state.spec.table_path,
                self.coder,
                self.gateway,
                self.harness(),
                max_runtime_retries=self.config.max_runtime_retries,
                timeout_s=self.config.timeout_s,
                question_id=state.spec.question_id,
            )

        try:
            state.run_result = self._timed(state, "code_run", work)
            if not state.run_result.outcome.ok:
                outcome = state.run_result.outcome
                state.fail("run", MrtError(f"{outcome.error_type}: {outcome.error_message}"))
        except MrtError as exc:
            state.fail("code", exc)

    def _stage_infer_type(self, state: _QuestionState) -> None:
        if state.spec.answer_type:
            try:
                state.answer_type = AnswerType(state.spec.answer_type)
                return
            except ValueError:
                log.warning(
                    "manifest answer_type %r for %s is not one of the five labels; inferring",
                    state.spec.answer_type, state.spec.question_id,
                )
        if state.error:
            return
        def work():
            inferred, defaulted = infer_answer_type(
                state.spec.question,
                self.gateway,
                question_id=state.spec.question_id,
                template_dir=self.config.template_dir,
            )
            state.flags["type_default"] = defaulted
            return inferred

        try:
            state.answer_type = self._timed(state, "interpret_type", work)
        except MrtError as exc:
            state.fail("interpret", exc)

    def _stage_coerce(self, state: _QuestionState) -> None:
        if state.error or state.answer_type is None:
            return
        raw = state.run_result.outcome.value

        def work():
            try:
                return coerce_answer(
                    raw,
                    state.answer_type,
                    self.gateway,
                    question_id=state.spec.question_id,
                    template_dir=self.config.template_dir,
                )
            except CoercionFailedError:
                state.flags["coercion_failed"] = True
                return TypedAnswer(state.answer_type, _stringify(raw), coerced=False)

        try:
            state.interpreted = self._timed(state, "interpret_coerce", work)
        except MrtError as exc:
            state.fail("interpret", exc)

    def _stage_format(self, state: _QuestionState) -> None:
        if state.error or state.interpreted is None:
            return

        def work():
            if not self.config.formatter_enabled:
                return None
            return format_answer(
                state.interpreted,
                decimals=self.config.formatter_decimals,
                enabled=True,
            )

        state.formatted = self._timed(state, "format", work)

    # -- assembly ----------------------------------------------------------

    def _final_answer(self, state: _QuestionState) -> TypedAnswer | None:
        if state.formatted is not None:
            return state.formatted
        return state.interpreted

    def _prediction(self, state: _QuestionState) -> dict:
        answer = self._final_answer(state)
        return {
            "question_id": state.spec.question_id,
            "answer_type": state.answer_type.value if state.answer_type else None,
            "value": answer.value if answer is not None and state.error is None else None,
        }

    def _trace(self, state: _QuestionState) -> PipelineTrace:
        result = state.run_result
        trace = PipelineTrace(
            question_id=state.spec.question_id,
            question=state.spec.question,
            table_name=state.table.name if state.table else Path(state.spec.table_path).stem,
            timings_ms=state.timings,
            plan_steps=list(state.plan.steps) if state.plan else None,
            plan_refined=state.plan.refined if state.plan else None,
            code_artifacts=[
                {
                    "source": a.source,
                    "attempts": a.attempts,
                    "repaired": a.repaired,
                    "syntax_ok": a.syntax_ok,
                }
                for a in (result.artifacts if result else [])
            ],
            outcomes=[o.to_json_dict() for o in (result.outcomes if result else [])],
            runtime_retries=result.runtime_retries if result else 0,
            answer_type=state.answer_type.value if state.answer_type else None,
            raw_value=result.outcome.value if result else None,
            interpreted_value=state.interpreted.value if state.interpreted else None,
            formatted_value=state.formatted.value if state.formatted else None,
            flags=state.flags,
            llm_calls=[r.index for r in self.gateway.log.for_question(state.spec.question_id)],
            error=state.error,
        )
        return trace

    def _finish(self, state: _QuestionState) -> dict:
        trace = self._trace(state)
        if self.trace_sink is not None:
            self.trace_sink.write(trace)
        return self._prediction(state)

    # -- drivers -------------------------------------------------------------

    def answer_question(self, spec: QuestionSpec) -> tuple[dict, PipelineTrace]:
        """Full stage sequence for one question; failure is recorded, not raised."""
        state = _QuestionState(spec)
        self._stage_profile(state)
        self._stage_draft(state)
        self._stage_refine(state)
        self._stage_code_run(state)
        self._stage_infer_type(state)
        self._stage_coerce(state)
        self._stage_format(state)
        trace = self._trace(state)
        if self.trace_sink is not None:
            self.trace_sink.write(trace)
        return self._prediction(state), trace

    def _map(self, fn, items, workers: int):
        if workers <= 1 or len(items) <= 1:
            for item in items:
                fn(item)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fn, items))

    def run_manifest(
        self,
        questions: list[QuestionSpec],
        mode: str | None = None,
        workers: int | None = None,
    ) -> list[dict]:
        """Process all questions; per-question failures never abort the batch."""
        mode = mode or self.config.mode
        workers = workers or self.config.workers
        if mode == "sequential":
            predictions = []
            states: list[_QuestionState] = [None] * len(questions)

            def work(indexed):
                i, spec = indexed
                state = _QuestionState(spec)
                self._stage_profile(state)
                self._stage_draft(state)
                self._stage_refine(state)
                self._stage_code_run(state)
                self._stage_infer_type(state)
                self._stage_coerce(state)
                self._stage_format(state)
                states[i] = state

            self._map(work, list(enumerate(questions)), workers)
            for state in states:
                predictions.append(self._finish(state))
            return predictions

        if mode != "stage-batched":
            raise ValueError(f"unknown execution mode '{mode}'")

        states = [_QuestionState(spec) for spec in questions]
        # profile each distinct table once, in first-appearance order
        by_table: dict[str, list[_QuestionState]] = {}
        for state in states:
            by_table.setdefault(str(state.spec.table_path), []).append(state)
        for group in by_table.values():
            self._stage_profile(group[0])
            for other in group[1:]:
                other.table = group[0].table
                other.profile = group[0].profile
                other.error = other.error or group[0].error
                if group[0].profile is not None:
                    other.flags["fallback_description"] = group[0].profile.fallback_descriptions
        for stage_fn in (
            self._stage_draft,
            self._stage_refine,
            self._stage_code_run,
            self._stage_infer_type,
            self._stage_coerce,
            self._stage_format,
        ):
            self._map(stage_fn, states, workers)
        return [self._finish(state) for state in states]


def _stringify(value: object) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False, default=str)

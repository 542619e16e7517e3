"""Majority-vote fusion of runs and per-answer-type accuracy scoring."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .interpreter import AnswerType, TypedAnswer, coerce_rules

log = logging.getLogger(__name__)

NUMBER_DECIMALS = 2
NUMBER_REL_TOL = 1e-6

TYPE_ORDER = (
    AnswerType.BOOLEAN,
    AnswerType.NUMBER,
    AnswerType.CATEGORY,
    AnswerType.LIST_NUMBER,
    AnswerType.LIST_CATEGORY,
)


@dataclass
class RunFile:
    run_id: str
    priority_rank: int
    records: dict[str, TypedAnswer] = field(default_factory=dict)


@dataclass
class TypeScore:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass
class EvalReport:
    per_type: dict[str, TypeScore] = field(default_factory=dict)
    overall: TypeScore = field(default_factory=TypeScore)
    unknown_ids: list[str] = field(default_factory=list)


def _round2(value: float) -> Decimal:
    return Decimal(str(value)).quantize(Decimal(1).scaleb(-NUMBER_DECIMALS), rounding=ROUND_HALF_UP)


def _numbers_equal(a: float, b: float) -> bool:
    if _round2(a) == _round2(b):
        return True
    return math.isclose(a, b, rel_tol=NUMBER_REL_TOL)


def _categories_equal(a: str, b: str) -> bool:
    return a.strip().casefold() == b.strip().casefold()


def _scalar_equal(a: object, b: object, answer_type: AnswerType) -> bool:
    if answer_type in (AnswerType.NUMBER, AnswerType.LIST_NUMBER):
        return _numbers_equal(a, b)
    if answer_type == AnswerType.BOOLEAN:
        return a is b or a == b
    return _categories_equal(str(a), str(b))


def _lists_equal(pred: list, gold: list, answer_type: AnswerType, ordered: bool) -> bool:
    if len(pred) != len(gold):
        return False
    if ordered:
        return all(_scalar_equal(p, g, answer_type) for p, g in zip(pred, gold))
    used = [False] * len(gold)
    for p in pred:
        for i, g in enumerate(gold):
            if not used[i] and _scalar_equal(p, g, answer_type):
                used[i] = True
                break
        else:
            return False
    return True


def compare_answers(
    predicted: TypedAnswer,
    gold: TypedAnswer,
    ordered_lists: bool = False,
) -> bool:
    """Semantic equality at the gold answer type.

    Both sides are first normalized toward the gold type with the interpreter's
    rule pass, so cross-type predictions ("True" as Category vs a Boolean gold)
    compare correctly; values the rules cannot shape count as a mismatch.
    """
    target = gold.answer_type
    pred_value, ok = coerce_rules(predicted.value, target)
    if not ok:
        return False
    gold_value, ok = coerce_rules(gold.value, target)
    if not ok:
        return False
    if target in (AnswerType.LIST_NUMBER, AnswerType.LIST_CATEGORY):
        return _lists_equal(pred_value, gold_value, target, ordered_lists)
    return _scalar_equal(pred_value, gold_value, target)


def majority_vote(answers: list[tuple[TypedAnswer, int]]) -> TypedAnswer:
    """Largest equivalence group wins; tied groups resolve to the group holding
    the lowest priority rank, and the winning group's lowest-rank member is
    returned."""
    if not answers:
        raise ValueError("majority_vote needs at least one answer")
    groups: list[list[tuple[TypedAnswer, int]]] = []
    for answer, rank in answers:
        for group in groups:
            if compare_answers(answer, group[0][0]):
                group.append((answer, rank))
                break
        else:
            groups.append([(answer, rank)])
    best = max(groups, key=lambda g: (len(g), -min(rank for _, rank in g)))
    return min(best, key=lambda item: item[1])[0]


def ensemble_runs(runs: list[RunFile]) -> dict[str, TypedAnswer]:
    """Per-question majority vote across runs; question order follows the
    highest-priority run, then any ids it lacks in rank order."""
    ordered_runs = sorted(runs, key=lambda r: r.priority_rank)
    question_ids: list[str] = []
    seen: set[str] = set()
    for run in ordered_runs:
        for qid in run.records:
            if qid not in seen:
                seen.add(qid)
                question_ids.append(qid)
    fused: dict[str, TypedAnswer] = {}
    for qid in question_ids:
        votes = [
            (run.records[qid], run.priority_rank)
            for run in ordered_runs
            if qid in run.records
        ]
        fused[qid] = majority_vote(votes)
    return fused


def score_run(
    predictions: RunFile,
    gold: dict[str, TypedAnswer],
    types: dict[str, AnswerType] | None = None,
    ordered_lists: bool = False,
) -> EvalReport:
    """Per-type and overall accuracy; missing predictions count as incorrect,
    predictions for unknown ids are warned about and ignored."""
    types = types or {qid: answer.answer_type for qid, answer in gold.items()}
    report = EvalReport(per_type={t.value: TypeScore() for t in TYPE_ORDER})
    for qid in predictions.records:
        if qid not in gold:
            log.warning("prediction for unknown question_id %r ignored", qid)
            report.unknown_ids.append(qid)
    for qid, gold_answer in gold.items():
        answer_type = types.get(qid, gold_answer.answer_type)
        score = report.per_type.setdefault(answer_type.value, TypeScore())
        predicted = predictions.records.get(qid)
        correct = predicted is not None and compare_answers(
            predicted, gold_answer, ordered_lists=ordered_lists
        )
        score.total += 1
        report.overall.total += 1
        if correct:
            score.correct += 1
            report.overall.correct += 1
    return report


# -- file formats ------------------------------------------------------------


def _record_from_json(obj: dict) -> tuple[str, TypedAnswer]:
    answer_type = AnswerType(obj["answer_type"]) if obj.get("answer_type") else AnswerType.CATEGORY
    return obj["question_id"], TypedAnswer(answer_type=answer_type, value=obj.get("value"))


def load_predictions(path: str | Path) -> dict[str, TypedAnswer]:
    records: dict[str, TypedAnswer] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            qid, answer = _record_from_json(json.loads(line))
            records[qid] = answer
    return records


def load_run_file(path: str | Path, priority_rank: int, run_id: str | None = None) -> RunFile:
    return RunFile(
        run_id=run_id or Path(path).stem,
        priority_rank=priority_rank,
        records=load_predictions(path),
    )


def write_predictions(path: str | Path, records: dict[str, TypedAnswer]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for qid, answer in records.items():
            fh.write(
                json.dumps(
                    {
                        "question_id": qid,
                        "answer_type": answer.answer_type.value,
                        "value": answer.value,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


# -- report rendering ---------------------------------------------------------


def render_report_text(report: EvalReport) -> str:
    width = max(len(t.value) for t in TYPE_ORDER)
    lines = [f"{'Answer Type':<{width + 2}}{'Correct':>8}{'Total':>7}{'Accuracy':>10}"]
    for answer_type in TYPE_ORDER:
        score = report.per_type.get(answer_type.value, TypeScore())
        lines.append(
            f"{answer_type.value:<{width + 2}}{score.correct:>8}{score.total:>7}"
            f"{score.accuracy:>10.3f}"
        )
    lines.append(
        f"{'All':<{width + 2}}{report.overall.correct:>8}{report.overall.total:>7}"
        f"{report.overall.accuracy:>10.3f}"
    )
    return "\n".join(lines)


def report_to_json(report: EvalReport) -> dict:
    return {
        "per_type": {
            answer_type.value: {
                "correct": report.per_type.get(answer_type.value, TypeScore()).correct,
                "total": report.per_type.get(answer_type.value, TypeScore()).total,
                "accuracy": report.per_type.get(answer_type.value, TypeScore()).accuracy,
            }
            for answer_type in TYPE_ORDER
        },
        "overall": {
            "correct": report.overall.correct,
            "total": report.overall.total,
            "accuracy": report.overall.accuracy,
        },
    }

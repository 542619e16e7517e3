from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrt.evaluate import (
    EvalReport,
    RunFile,
    compare_answers,
    ensemble_runs,
    load_predictions,
    majority_vote,
    render_report_text,
    report_to_json,
    score_run,
    write_predictions,
)
from mrt.interpreter import AnswerType, TypedAnswer


def _cat(value: str) -> TypedAnswer:
    return TypedAnswer(AnswerType.CATEGORY, value)


def _num(value) -> TypedAnswer:
    return TypedAnswer(AnswerType.NUMBER, value)


class TestMajorityVote:
    def test_strict_majority(self):
        result = majority_vote([(_cat("A"), 1), (_cat("A"), 2), (_cat("B"), 3)])
        assert result.value == "A"

    def test_three_way_tie_rank_one_wins(self):
        result = majority_vote([(_cat("A"), 1), (_cat("B"), 2), (_cat("C"), 3)])
        assert result.value == "A"

    def test_majority_beats_priority(self):
        result = majority_vote([(_cat("B"), 2), (_cat("B"), 3), (_cat("A"), 1)])
        assert result.value == "B"

    def test_semantic_grouping_across_representations(self):
        # 38 and 38.0 vote together
        result = majority_vote([(_num(38), 2), (_num(38.0), 3), (_num(40), 1)])
        assert result.value in (38, 38.0)

    def test_permutation_invariant_under_strict_majority(self):
        votes = [(_cat("A"), 1), (_cat("B"), 2), (_cat("A"), 3)]
        for perm in itertools.permutations(votes):
            assert majority_vote(list(perm)).value == "A"

    def test_exhaustive_oracle_small_multisets(self):
        # every vote assignment of <= 4 votes over 3 distinct answers, all rank
        # assignments; oracle is plain counting with the same tie rule
        answers = ["A", "B", "C"]
        for n in range(1, 5):
            for combo in itertools.product(answers, repeat=n):
                ranks = list(range(1, n + 1))
                for rank_perm in itertools.permutations(ranks):
                    votes = [(_cat(a), r) for a, r in zip(combo, rank_perm)]
                    got = majority_vote(votes).value
                    counts = {a: combo.count(a) for a in set(combo)}
                    best_count = max(counts.values())
                    tied = [a for a, c in counts.items() if c == best_count]
                    best_rank = {
                        a: min(r for x, r in zip(combo, rank_perm) if x == a) for a in tied
                    }
                    expected = min(tied, key=lambda a: best_rank[a])
                    assert got == expected, (combo, rank_perm)


class TestCompareAnswers:
    def test_two_decimal_rounding(self):
        assert compare_answers(_num(38.001), _num(38.0)) is True
        assert compare_answers(_num(38.01), _num(38.0)) is False

    def test_relative_tolerance_backstop(self):
        # values straddling a 2-decimal boundary but relatively equal
        assert compare_answers(_num(1234567.0000001), _num(1234567.0)) is True

    def test_list_order_insensitive_case_insensitive(self):
        a = TypedAnswer(AnswerType.LIST_CATEGORY, ["a", "B"])
        b = TypedAnswer(AnswerType.LIST_CATEGORY, ["b", "A"])
        assert compare_answers(a, b) is True

    def test_ordered_mode(self):
        a = TypedAnswer(AnswerType.LIST_CATEGORY, ["a", "b"])
        b = TypedAnswer(AnswerType.LIST_CATEGORY, ["b", "a"])
        assert compare_answers(a, b, ordered_lists=True) is False
        assert compare_answers(a, b, ordered_lists=False) is True

    def test_cross_type_coercion_toward_gold(self):
        predicted = TypedAnswer(AnswerType.CATEGORY, "True")
        gold = TypedAnswer(AnswerType.BOOLEAN, True)
        assert compare_answers(predicted, gold) is True

    def test_multiset_lengths_must_match(self):
        a = TypedAnswer(AnswerType.LIST_NUMBER, [1, 2, 2])
        b = TypedAnswer(AnswerType.LIST_NUMBER, [1, 2])
        assert compare_answers(a, b) is False

    def test_multiset_respects_counts(self):
        a = TypedAnswer(AnswerType.LIST_NUMBER, [1, 1, 2])
        b = TypedAnswer(AnswerType.LIST_NUMBER, [1, 2, 2])
        assert compare_answers(a, b) is False

    def test_unparseable_prediction_is_wrong(self):
        assert compare_answers(_cat("ERROR: boom"), _num(4)) is False
        assert compare_answers(TypedAnswer(AnswerType.NUMBER, None), _num(4)) is False

    @given(
        st.sampled_from(list(AnswerType)),
        st.data(),
    )
    @settings(max_examples=150, deadline=None)
    def test_reflexive_and_symmetric_same_type(self, answer_type, data):
        value = _draw_value(data, answer_type)
        a = TypedAnswer(answer_type, value)
        b = TypedAnswer(answer_type, value)
        assert compare_answers(a, b) is True
        other = TypedAnswer(answer_type, _draw_value(data, answer_type))
        assert compare_answers(a, other) == compare_answers(other, a)


def _draw_value(data, answer_type):
    numbers = st.one_of(st.integers(-100, 100), st.floats(-100, 100, allow_nan=False))
    words = st.text(alphabet="abcXYZ ", min_size=1, max_size=6)
    if answer_type == AnswerType.BOOLEAN:
        return data.draw(st.booleans())
    if answer_type == AnswerType.NUMBER:
        return data.draw(numbers)
    if answer_type == AnswerType.CATEGORY:
        return data.draw(words)
    if answer_type == AnswerType.LIST_NUMBER:
        return data.draw(st.lists(numbers, max_size=4))
    return data.draw(st.lists(words, max_size=4))


class TestScoreRun:
    def _gold(self):
        return {
            "q1": TypedAnswer(AnswerType.BOOLEAN, True),
            "q2": TypedAnswer(AnswerType.BOOLEAN, False),
            "q3": TypedAnswer(AnswerType.NUMBER, 4),
            "q4": TypedAnswer(AnswerType.NUMBER, 7),
        }

    def test_three_of_four(self):
        run = RunFile(
            run_id="r", priority_rank=1,
            records={
                "q1": TypedAnswer(AnswerType.BOOLEAN, True),
                "q2": TypedAnswer(AnswerType.BOOLEAN, False),
                "q3": TypedAnswer(AnswerType.NUMBER, 4),
                "q4": TypedAnswer(AnswerType.NUMBER, 8),
            },
        )
        report = score_run(run, self._gold())
        assert report.overall.accuracy == 0.75

    def test_missing_prediction_counts_as_wrong(self):
        run = RunFile(
            run_id="r", priority_rank=1,
            records={
                "q1": TypedAnswer(AnswerType.BOOLEAN, True),
                "q2": TypedAnswer(AnswerType.BOOLEAN, False),
                "q3": TypedAnswer(AnswerType.NUMBER, 4),
            },
        )
        report = score_run(run, self._gold())
        assert report.overall.accuracy == 0.75

    def test_per_type_split(self):
        run = RunFile(
            run_id="r", priority_rank=1,
            records={
                "q1": TypedAnswer(AnswerType.BOOLEAN, True),
                "q2": TypedAnswer(AnswerType.BOOLEAN, True),  # wrong
                "q3": TypedAnswer(AnswerType.NUMBER, 4),
                "q4": TypedAnswer(AnswerType.NUMBER, 7),
            },
        )
        report = score_run(run, self._gold())
        assert report.per_type["Boolean"].accuracy == 0.5
        assert report.per_type["Number"].accuracy == 1.0

    def test_unknown_ids_warned_and_ignored(self, caplog):
        run = RunFile(
            run_id="r", priority_rank=1,
            records={"zz": TypedAnswer(AnswerType.NUMBER, 1)},
        )
        with caplog.at_level("WARNING"):
            report = score_run(run, self._gold())
        assert report.unknown_ids == ["zz"]
        assert report.overall.total == 4


class TestEnsembleAndFiles:
    def test_two_agreeing_runs_win_everywhere(self):
        runs = [
            RunFile("a", 1, {"q1": _cat("X"), "q2": _cat("M")}),
            RunFile("b", 2, {"q1": _cat("X"), "q2": _cat("N")}),
            RunFile("c", 3, {"q1": _cat("Y"), "q2": _cat("N")}),
        ]
        fused = ensemble_runs(runs)
        assert fused["q1"].value == "X"
        assert fused["q2"].value == "N"

    def test_predictions_round_trip(self, tmp_path):
        records = {
            "q1": TypedAnswer(AnswerType.LIST_NUMBER, [1, 2]),
            "q2": TypedAnswer(AnswerType.CATEGORY, "Water"),
        }
        path = write_predictions(tmp_path / "p.jsonl", records)
        loaded = load_predictions(path)
        assert loaded["q1"].value == [1, 2]
        assert loaded["q1"].answer_type == AnswerType.LIST_NUMBER
        assert loaded["q2"].value == "Water"

    def test_ensemble_output_is_valid_predictions_file(self, tmp_path):
        runs = [
            RunFile("a", 1, {"q1": _cat("X")}),
            RunFile("b", 2, {"q1": _cat("X")}),
        ]
        path = write_predictions(tmp_path / "ens.jsonl", ensemble_runs(runs))
        assert load_predictions(path)["q1"].value == "X"


class TestReportRendering:
    def test_text_table_has_all_type_rows(self):
        report = score_run(RunFile("r", 1, {}), {"q": _num(1)})
        text = render_report_text(report)
        for label in ("Boolean", "Number", "Category", "ListNumber", "ListCategory", "All"):
            assert label in text

    def test_json_shape(self):
        report = score_run(RunFile("r", 1, {"q": _num(1)}), {"q": _num(1)})
        data = report_to_json(report)
        assert data["overall"] == {"correct": 1, "total": 1, "accuracy": 1.0}
        assert set(data["per_type"]) == {
            "Boolean", "Number", "Category", "ListNumber", "ListCategory",
        }

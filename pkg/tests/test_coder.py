from __future__ import annotations

import pytest

from mrt.coder import (
    Coder,
    build_coder_prompt,
    check_and_repair,
    extract_code,
    validate_and_strip,
)
from mrt.errors import NoCodeFoundError, RepairExhaustedError
from mrt.explainer import InstructionPlan
from mrt.gateway import StageName
from mrt.harness_client import Harness
from mrt.prompts import load_template
from tests.conftest import scripted_gateway
from tests.test_explainer import _profile_with_defense

VALID = 'def parse_dataframe(df):\n    return "ok"\n'
BROKEN_SYNTAX = 'def parse_dataframe(df):\n    return sorted(df, key=len\n'


@pytest.fixture
def harness(stub_cmd):
    with Harness(stub_cmd) as h:
        yield h


def _plan(steps=None):
    return InstructionPlan(question_id="q", steps=steps or ["Sort rows", "Pick top", "Return type", "Done"])


class TestBuildCoderPrompt:
    def test_numbered_instruction_lines(self):
        prompt = build_coder_prompt(_plan(), _profile_with_defense())
        for i in range(1, 5):
            assert f"{i}. " in prompt

    def test_exact_column_names_present(self):
        prompt = build_coder_prompt(_plan(), _profile_with_defense())
        assert "`defense`" in prompt and "`type1`" in prompt

    def test_guidelines_block_verbatim_from_template(self):
        template = load_template("coder")
        guidelines = template.split("Guidelines:", 1)[1]
        static_lines = [l for l in guidelines.splitlines() if l.strip() and "{{" not in l]
        prompt = build_coder_prompt(_plan(), _profile_with_defense())
        for line in static_lines:
            assert line in prompt

    def test_empty_plan_rejected(self):
        with pytest.raises(ValueError):
            build_coder_prompt(InstructionPlan(question_id="q", steps=[]), _profile_with_defense())


class TestExtractCode:
    def test_fenced_block(self):
        reply = f"Sure, here you go:\n```python\n{VALID}```\nHope it helps!"
        assert extract_code(reply) == VALID

    def test_bare_def_suffix(self):
        reply = 'def parse_dataframe(df):\n    return 1'
        assert extract_code(reply) == reply + "\n"

    def test_prose_before_bare_def(self):
        reply = "The function below does it.\ndef parse_dataframe(df):\n    return 1"
        assert extract_code(reply) == "def parse_dataframe(df):\n    return 1\n"

    def test_no_code_found(self):
        with pytest.raises(NoCodeFoundError):
            extract_code("I cannot help with that.")

    def test_tabs_and_crlf_normalized(self):
        reply = "```\ndef parse_dataframe(df):\r\n\treturn 1\r\n```"
        assert extract_code(reply) == "def parse_dataframe(df):\n    return 1\n"

    def test_first_fence_wins(self):
        reply = f"```python\n{VALID}```\n```python\ndef other():\n    pass\n```"
        assert extract_code(reply) == VALID


class TestValidateAndStrip:
    def test_valid_passes_unchanged(self):
        cleaned, diag = validate_and_strip(VALID)
        assert diag is None
        assert cleaned == VALID

    def test_top_level_junk_stripped_imports_kept(self):
        code = (
            "import math\n"
            "print('debugging')\n"
            "x = [1,\n"
            "     2]\n"
            + VALID
            + "result = parse_dataframe(None)\n"
        )
        cleaned, diag = validate_and_strip(code)
        assert diag is None
        assert "import math" in cleaned
        assert "print" not in cleaned and "x = [1," not in cleaned and "result =" not in cleaned

    def test_missing_function(self):
        cleaned, diag = validate_and_strip("def other(df):\n    return 1\n")
        assert cleaned is None and "parse_dataframe" in diag

    def test_extra_helper_function_rejected(self):
        code = "def helper(x):\n    return x\n" + VALID
        cleaned, diag = validate_and_strip(code)
        assert cleaned is None and "single function" in diag

    def test_wrong_arity(self):
        cleaned, diag = validate_and_strip("def parse_dataframe(df, extra):\n    return 1\n")
        assert cleaned is None and "exactly one parameter" in diag

    def test_annotated_single_parameter_ok(self):
        code = "def parse_dataframe(df: pd.DataFrame) -> str:\n    return 'x'\n"
        cleaned, diag = validate_and_strip(code)
        assert diag is None

    def test_groupby_token_rejected(self):
        code = 'def parse_dataframe(df):\n    return df.groupby("a").size()\n'
        cleaned, diag = validate_and_strip(code)
        assert cleaned is None and "group-by" in diag

    def test_star_args_rejected(self):
        cleaned, diag = validate_and_strip("def parse_dataframe(*frames):\n    return 1\n")
        assert cleaned is None


class TestCheckAndRepair:
    def test_valid_first_try(self, harness):
        gateway = scripted_gateway([])
        artifact = check_and_repair(VALID, gateway, harness)
        assert artifact.attempts == 1
        assert artifact.repaired is False
        assert artifact.syntax_ok is True

    def test_broken_then_fixed(self, harness):
        gateway = scripted_gateway(
            [{"stage": "coder_repair", "content": f"```python\n{VALID}```"}]
        )
        artifact = check_and_repair(BROKEN_SYNTAX, gateway, harness)
        assert artifact.attempts == 2
        assert artifact.repaired is True

    def test_exhaustion_after_four_repairs(self, harness):
        gateway = scripted_gateway(
            [{"stage": "coder_repair", "content": BROKEN_SYNTAX} for _ in range(10)]
        )
        with pytest.raises(RepairExhaustedError):
            check_and_repair(BROKEN_SYNTAX, gateway, harness)
        assert len(gateway.log.for_stage(StageName.CODER_REPAIR)) == 4

    def test_repair_prompt_carries_diagnostic(self, harness):
        gateway = scripted_gateway(
            [{"stage": "coder_repair", "content": f"```python\n{VALID}```"}]
        )
        check_and_repair('def parse_dataframe(df):\n    return df.groupby("a")\n', gateway, harness)
        prompt = gateway.log.for_stage(StageName.CODER_REPAIR)[0].prompt
        assert "group-by" in prompt

    def test_accepted_source_passes_fresh_check(self, harness):
        gateway = scripted_gateway(
            [{"stage": "coder_repair", "content": f"```python\n{VALID}```"}]
        )
        artifact = check_and_repair(BROKEN_SYNTAX, gateway, harness)
        assert harness.check(artifact.source).ok

    def test_unrepairable_reply_without_code_counts(self, harness):
        gateway = scripted_gateway(
            [{"stage": "coder_repair", "content": "sorry, no idea"} for _ in range(4)]
        )
        with pytest.raises(RepairExhaustedError):
            check_and_repair(BROKEN_SYNTAX, gateway, harness)


class TestCoderGenerate:
    def test_generate_valid(self, harness):
        gateway = scripted_gateway([{"stage": "coder", "content": f"```python\n{VALID}```"}])
        artifact = Coder().generate(_plan(), _profile_with_defense(), gateway, harness)
        assert artifact.syntax_ok and artifact.attempts == 1

    def test_error_feedback_appended_to_prompt(self, harness):
        gateway = scripted_gateway([{"stage": "coder", "content": f"```python\n{VALID}```"}])
        Coder().generate(
            _plan(), _profile_with_defense(), gateway, harness,
            error_feedback="KeyError: 'defense '",
        )
        assert "KeyError: 'defense '" in gateway.log.for_stage(StageName.CODER)[0].prompt

    def test_no_code_reply_goes_through_repair(self, harness):
        gateway = scripted_gateway(
            [
                {"stage": "coder", "content": "cannot help"},
                {"stage": "coder_repair", "content": f"```python\n{VALID}```"},
            ]
        )
        artifact = Coder().generate(_plan(), _profile_with_defense(), gateway, harness)
        assert artifact.repaired is True
        assert artifact.attempts == 2

"""Final rule-based normalization of a typed answer."""
from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal

from .interpreter import AnswerType, TypedAnswer
from .table import bool_token_value

DEFAULT_DECIMALS = 2


def _round_half_away(value: float, decimals: int) -> float:
    exponent = Decimal(1).scaleb(-decimals)
    return float(Decimal(str(value)).quantize(exponent, rounding=ROUND_HALF_UP))


def _normalize_scalar(value: object, answer_type: AnswerType, decimals: int) -> object:
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        rounded = _round_half_away(value, decimals)
        # rounding may land on an integral value; demote again so the
        # formatter stays idempotent
        return int(rounded) if rounded.is_integer() else rounded
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        s = value.strip()
        while len(s) > 1 and s[0] in "'\"" and s[-1] == s[0]:
            s = s[1:-1].strip()
        if answer_type == AnswerType.BOOLEAN:
            as_bool = bool_token_value(s)
            if as_bool is not None:
                return as_bool
        return s
    return value


def format_answer(
    answer: TypedAnswer,
    decimals: int = DEFAULT_DECIMALS,
    enabled: bool = True,
) -> TypedAnswer:
    """Apply, in order: integral-real demotion (element-wise in lists), tuple
    normalization to plain lists, rounding of non-integral reals, boolean
    token conversion for Boolean answers, and string trimming. The answer type
    is never changed and lists are never reordered."""
    if not enabled:
        return answer
    value = answer.value
    if isinstance(value, tuple):
        value = list(value)
    if isinstance(value, list):
        value = [_normalize_scalar(v, answer.answer_type, decimals) for v in value]
    else:
        value = _normalize_scalar(value, answer.answer_type, decimals)
    return TypedAnswer(answer_type=answer.answer_type, value=value, coerced=answer.coerced)

"""Exception types shared across the pipeline."""
from __future__ import annotations


class MrtError(Exception):
    """Base class for all pipeline errors."""


class MalformedCsvError(MrtError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        suffix = f" (row {row})" if row is not None else ""
        super().__init__(f"{message}{suffix}")


class LlmUnavailableError(MrtError):
    """Transport-level failure after all retries."""


class GatewayTimeoutError(LlmUnavailableError):
    """The backend did not answer within the configured timeout."""


class ReplayExhaustedError(MrtError):
    """The scripted backend ran out of queued replies; a test-only hard failure."""

    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"no scripted reply left for stage '{stage}'")


class UnknownTemplateError(MrtError):
    def __init__(self, name: str):
        self.template = name
        super().__init__(f"unknown prompt template '{name}'")


class UnboundPlaceholderError(MrtError):
    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"unbound placeholder '{placeholder}'")


class EmptyPlanError(MrtError):
    """Both the draft and the refined instruction lists parsed to zero steps."""


class NoCodeFoundError(MrtError):
    """The model reply contains neither a code fence nor a parse_dataframe definition."""


class RepairExhaustedError(MrtError):
    def __init__(self, diagnostic: str):
        self.diagnostic = diagnostic
        super().__init__(f"code could not be repaired: {diagnostic}")


class HarnessCrashedError(MrtError):
    """The harness process died without sending a protocol reply."""


class CoercionFailedError(MrtError):
    def __init__(self, value: object, target: str):
        self.value = value
        self.target = target
        super().__init__(f"cannot coerce {value!r} to {target}")


class CacheIoError(MrtError):
    """Profile cache could not be read or written (non-fatal)."""


class UnknownQuestionIdError(MrtError):
    def __init__(self, question_id: str):
        self.question_id = question_id
        super().__init__(f"unknown question_id '{question_id}'")

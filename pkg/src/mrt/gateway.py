"""Chat-completion access for every stage: per-stage routing, retries, replay."""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import requests

from .errors import GatewayTimeoutError, LlmUnavailableError, ReplayExhaustedError

API_KEY_ENV = "MRT_LLM_API_KEY"


class StageName(str, Enum):
    DESCRIPTOR = "descriptor"
    EXPLAINER = "explainer"
    EXPLAINER_REFINE = "explainer_refine"
    CODER = "coder"
    CODER_REPAIR = "coder_repair"
    INTERPRETER_TYPE = "interpreter_type"
    INTERPRETER_COERCE = "interpreter_coerce"


DEFAULT_MAX_TOKENS: dict[StageName, int] = {
    StageName.DESCRIPTOR: 1024,
    StageName.EXPLAINER: 1024,
    StageName.EXPLAINER_REFINE: 1024,
    StageName.CODER: 2048,
    StageName.CODER_REPAIR: 2048,
    StageName.INTERPRETER_TYPE: 256,
    StageName.INTERPRETER_COERCE: 256,
}

SYSTEM_PROMPTS: dict[StageName, str] = {
    StageName.DESCRIPTOR: "You describe the columns of tabular datasets precisely and concisely.",
    StageName.EXPLAINER: "You plan how to answer questions about tables, step by step, in plain language.",
    StageName.EXPLAINER_REFINE: "You review and simplify step-by-step plans for answering questions about tables.",
    StageName.CODER: "You write correct, minimal Pandas code.",
    StageName.CODER_REPAIR: "You fix broken Python code without changing what it computes.",
    StageName.INTERPRETER_TYPE: "You classify the expected answer type of questions about tables.",
    StageName.INTERPRETER_COERCE: "You rewrite values into a requested data type.",
}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass
class ChatRequest:
    stage: StageName
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if not isinstance(self.messages, tuple):
            self.messages = tuple(self.messages)
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "system":
            raise ValueError("first message role must be 'system'")

    def rendered(self) -> str:
        return "\n\n".join(f"[{m.role}]\n{m.content}" for m in self.messages)


@dataclass
class ChatReply:
    content: str
    backend_id: str
    latency_ms: int


@dataclass
class StageBinding:
    backend: str = "scripted"  # "http" or "scripted"
    endpoint: str = ""
    model: str = "scripted"
    temperature: float = 0.0
    timeout_s: float = 60.0
    retries: int = 2
    max_tokens: int | None = None  # None -> per-stage default


@dataclass
class GatewayConfig:
    stages: dict[StageName, StageBinding] = field(
        default_factory=lambda: {stage: StageBinding() for stage in StageName}
    )

    def binding(self, stage: StageName) -> StageBinding:
        try:
            return self.stages[stage]
        except KeyError:
            raise ValueError(f"no gateway binding for stage '{stage.value}'") from None

    def max_tokens(self, stage: StageName) -> int:
        bound = self.binding(stage).max_tokens
        return bound if bound is not None else DEFAULT_MAX_TOKENS[stage]


@dataclass(frozen=True)
class InteractionRecord:
    index: int
    stage: str
    model: str
    backend_id: str
    question_id: str
    prompt: str
    reply: str
    latency_ms: int


class InteractionLog:
    """Append-only, internally synchronized record of every complete() call."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[InteractionRecord] = []

    def append(self, **kwargs) -> InteractionRecord:
        with self._lock:
            record = InteractionRecord(index=len(self._records), **kwargs)
            self._records.append(record)
            return record

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def records(self) -> list[InteractionRecord]:
        with self._lock:
            return list(self._records)

    def for_stage(self, stage: StageName | str) -> list[InteractionRecord]:
        name = stage.value if isinstance(stage, StageName) else stage
        return [r for r in self.records() if r.stage == name]

    def for_question(self, question_id: str) -> list[InteractionRecord]:
        return [r for r in self.records() if r.question_id == question_id]


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Deterministic replay: ordered per-stage queues, or prompt-digest keyed replies."""

    def __init__(
        self,
        replies: list[dict] | None = None,
        keyed: dict[str, str] | None = None,
    ):
        self._lock = threading.Lock()
        self._queues: dict[str, deque[str]] = {}
        for item in replies or []:
            self._queues.setdefault(item["stage"], deque()).append(item["content"])
        self._keyed = dict(keyed or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError("replay file must be a JSON array of {stage, content}")
        return cls(replies=data)

    def pop(self, stage: str, prompt: str) -> str:
        with self._lock:
            if self._keyed:
                digest = prompt_digest(prompt)
                if digest in self._keyed:
                    return self._keyed[digest]
            queue = self._queues.get(stage)
            if not queue:
                raise ReplayExhaustedError(stage)
            return queue.popleft()

    def remaining(self, stage: str) -> int:
        with self._lock:
            return len(self._queues.get(stage, ()))


class HttpBackend:
    """OpenAI-compatible chat-completions transport with bounded retries."""

    def __init__(self, api_key: str | None = None, backoff_base_s: float = 0.25):
        self.api_key = api_key
        self.backoff_base_s = backoff_base_s

    def complete(self, binding: StageBinding, request: ChatRequest) -> str:
        url = binding.endpoint.rstrip("/") + "/chat/completions"
        body = {
            "model": binding.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        attempts = binding.retries + 1
        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(attempts):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=binding.timeout_s)
                resp.raise_for_status()
                payload = resp.json()
                return payload["choices"][0]["message"]["content"]
            except requests.Timeout as exc:
                last_exc, timed_out = exc, True
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_exc, timed_out = exc, False
            if attempt < attempts - 1:
                time.sleep(self.backoff_base_s * (2**attempt))
        if timed_out:
            raise GatewayTimeoutError(f"no reply from {url} after {attempts} attempts") from last_exc
        raise LlmUnavailableError(f"{url} failed after {attempts} attempts: {last_exc}") from last_exc


class LlmGateway:
    """Uniform access to all chat stages; every call lands in the interaction log."""

    def __init__(
        self,
        config: GatewayConfig | None = None,
        scripted: ScriptedBackend | None = None,
        log: InteractionLog | None = None,
        api_key: str | None = None,
    ):
        self.config = config or GatewayConfig()
        self.scripted = scripted
        self.log = log or InteractionLog()
        self._http = HttpBackend(api_key=api_key or os.environ.get(API_KEY_ENV))

    def complete(self, request: ChatRequest, question_id: str = "") -> ChatReply:
        binding = self.config.binding(request.stage)
        prompt = request.rendered()
        started = time.perf_counter()
        if binding.backend == "scripted":
            if self.scripted is None:
                raise LlmUnavailableError(
                    f"stage '{request.stage.value}' is bound to the scripted backend "
                    "but no replay source is configured"
                )
            content = self.scripted.pop(request.stage.value, prompt)
            backend_id = f"scripted:{binding.model}"
        elif binding.backend == "http":
            content = self._http.complete(binding, request)
            backend_id = f"http:{binding.model}"
        else:
            raise ValueError(f"unknown backend kind '{binding.backend}'")
        latency_ms = int((time.perf_counter() - started) * 1000)
        self.log.append(
            stage=request.stage.value,
            model=binding.model,
            backend_id=backend_id,
            question_id=question_id,
            prompt=prompt,
            reply=content,
            latency_ms=latency_ms,
        )
        return ChatReply(content=content, backend_id=backend_id, latency_ms=latency_ms)

    def chat(self, stage: StageName, user_prompt: str, question_id: str = "") -> str:
        """Build a system+user request for the stage and return the reply text."""
        binding = self.config.binding(stage)
        request = ChatRequest(
            stage=stage,
            messages=(
                ChatMessage("system", SYSTEM_PROMPTS[stage]),
                ChatMessage("user", user_prompt),
            ),
            temperature=binding.temperature,
            max_tokens=self.config.max_tokens(stage),
        )
        return self.complete(request, question_id=question_id).content

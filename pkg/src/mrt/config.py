"""Run configuration: TOML file plus MRT_-prefixed environment overrides."""
from __future__ import annotations

import os
import shlex
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .gateway import GatewayConfig, StageBinding, StageName

ENV_PREFIX = "MRT_"

DEFAULT_HARNESS_CMD = [sys.executable, "-m", "mrt_harness"]


@dataclass
class RunConfig:
    # pipeline thresholds
    unique_listing_threshold: int = 7
    max_repair_attempts: int = 4
    max_runtime_retries: int = 3
    timeout_s: float = 30.0
    max_rows: int = 10
    top_k: int = 5
    max_steps: int = 12
    max_cell_chars: int = 80
    # formatter
    formatter_enabled: bool = True
    formatter_decimals: int = 2
    # eval
    eval_ordered_lists: bool = False
    # run
    mode: str = "sequential"  # or "stage-batched"
    workers: int = 1
    cache_dir: str = ".mrt-cache"
    output_dir: str = "out"
    harness_cmd: list[str] = field(default_factory=lambda: list(DEFAULT_HARNESS_CMD))
    # gateway
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    replay_file: str | None = None
    template_dir: str | None = None

    def __post_init__(self):
        if self.mode not in ("sequential", "stage-batched"):
            raise ValueError(f"unknown execution mode '{self.mode}'")
        for name in (
            "unique_listing_threshold", "max_repair_attempts", "max_runtime_retries",
            "max_rows", "top_k", "max_steps", "max_cell_chars", "workers",
            "formatter_decimals",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


_SECTION_FIELDS = {
    "pipeline": (
        "unique_listing_threshold", "max_repair_attempts", "max_runtime_retries",
        "timeout_s", "max_rows", "top_k", "max_steps", "max_cell_chars",
    ),
    "formatter": ("enabled", "decimals"),
    "eval": ("ordered_lists",),
    "run": ("mode", "workers", "cache_dir", "output_dir", "harness_cmd", "template_dir"),
}

_BINDING_KEYS = ("backend", "endpoint", "model", "temperature", "timeout_s", "retries", "max_tokens")


def _binding_from_dict(base: StageBinding, data: dict) -> StageBinding:
    values = {k: getattr(base, k) for k in _BINDING_KEYS}
    for key in _BINDING_KEYS:
        if key in data:
            values[key] = data[key]
    return StageBinding(**values)


def _gateway_from_dict(data: dict) -> tuple[GatewayConfig, str | None]:
    base = _binding_from_dict(StageBinding(), data)
    stages = {stage: _binding_from_dict(base, {}) for stage in StageName}
    for name, overrides in (data.get("stages") or {}).items():
        stage = StageName(name)
        stages[stage] = _binding_from_dict(base, overrides)
    return GatewayConfig(stages=stages), data.get("replay_file")


def _coerce_env_value(raw: str, current: object) -> object:
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, list):
        return shlex.split(raw)
    return raw


def _apply_env(config: RunConfig, env: dict[str, str]) -> None:
    names = {f.name for f in fields(RunConfig)} - {"gateway"}
    for key, raw in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name.startswith("llm_"):
            continue  # MRT_LLM_API_KEY belongs to the gateway transport
        # section-style overrides: MRT_FORMATTER__DECIMALS -> formatter_decimals
        name = name.replace("__", "_")
        if name not in names:
            continue
        current = getattr(config, name)
        setattr(config, name, _coerce_env_value(raw, current))


def load_config(path: str | Path | None = None, env: dict[str, str] | None = None) -> RunConfig:
    """Build the run configuration from an optional TOML file, then apply
    MRT_-prefixed environment overrides."""
    config = RunConfig()
    if path is not None:
        with open(path, "rb") as fh:
            document = tomllib.load(fh)
        flat: dict[str, object] = {}
        for section, keys in _SECTION_FIELDS.items():
            data = document.get(section) or {}
            for key in keys:
                if key in data:
                    if section in ("formatter", "eval"):
                        flat[f"{section}_{key}"] = data[key]
                    else:
                        flat[key] = data[key]
        for key, value in flat.items():
            setattr(config, key, value)
        if "gateway" in document:
            config.gateway, config.replay_file = _gateway_from_dict(document["gateway"])
    _apply_env(config, env if env is not None else dict(os.environ))
    config.__post_init__()  # re-check bounds after overrides
    return config

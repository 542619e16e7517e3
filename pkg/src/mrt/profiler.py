"""Per-column statistics plus model-written descriptions, cached by table fingerprint."""
from __future__ import annotations

import json
import logging
import os
import statistics
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import LlmGateway, StageName
from .prompts import render_prompt
from .table import Cell, Column, ColumnKind, Table, serialize_subset

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Distinct values are kept on the profile for small columns so downstream
# prompt builders can list them all; 20 matches the categorical threshold.
DISTINCT_CAP = 20

TYPE_LABELS: dict[ColumnKind, str] = {
    ColumnKind.BOOLEAN: "bool",
    ColumnKind.INTEGER: "int64",
    ColumnKind.REAL: "float64",
    ColumnKind.CATEGORICAL: "category",
    ColumnKind.TEXT: "object",
    ColumnKind.DATE_LIKE: "date",
}

_FREQ_KINDS = (ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN, ColumnKind.TEXT)
_NUMERIC_KINDS = (ColumnKind.INTEGER, ColumnKind.REAL)


@dataclass
class ColumnProfile:
    name: str
    type_label: str
    missing_values: int
    unique: int
    flag_binary: bool
    mean: float | None = None
    std: float | None = None
    min: float | None = None
    max: float | None = None
    freq_values: list[tuple[Cell, int]] | None = None
    distinct_values: list[Cell] | None = None
    description: str = ""

    def to_json_dict(self) -> dict:
        out: dict = {
            "name": self.name,
            "type_label": self.type_label,
            "missing_values": self.missing_values,
            "unique": self.unique,
            "flag_binary": self.flag_binary,
        }
        for key in ("mean", "std", "min", "max"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.freq_values is not None:
            out["freq_values"] = [[v, c] for v, c in self.freq_values]
        if self.distinct_values is not None:
            out["distinct_values"] = list(self.distinct_values)
        out["description"] = self.description
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ColumnProfile":
        freq = data.get("freq_values")
        return cls(
            name=data["name"],
            type_label=data["type_label"],
            missing_values=data["missing_values"],
            unique=data["unique"],
            flag_binary=data["flag_binary"],
            mean=data.get("mean"),
            std=data.get("std"),
            min=data.get("min"),
            max=data.get("max"),
            freq_values=[(v, c) for v, c in freq] if freq is not None else None,
            distinct_values=data.get("distinct_values"),
            description=data.get("description", ""),
        )


@dataclass
class TableProfile:
    table_name: str
    table_fingerprint: str
    column_profiles: list[ColumnProfile] = field(default_factory=list)
    fallback_descriptions: bool = False


def fallback_description(name: str, type_label: str) -> str:
    return f"column `{name}` of type `{type_label}`"


def compute_column_stats(column: Column, row_count: int, top_k: int = 5) -> ColumnProfile:
    """Pure statistics for one column; the description stays empty."""
    values = [c for c in column.cells if c is not None]
    missing = row_count - len(values)
    unique = len(set(values))
    profile = ColumnProfile(
        name=column.name,
        type_label=TYPE_LABELS[column.kind],
        missing_values=missing,
        unique=unique,
        flag_binary=column.kind == ColumnKind.BOOLEAN,
    )
    if column.kind in _NUMERIC_KINDS and values:
        profile.mean = statistics.mean(values)
        profile.min = min(values)
        profile.max = max(values)
        # sample standard deviation (n-1); undefined below two observations
        if len(values) >= 2:
            profile.std = statistics.stdev(values)
    if column.kind in _FREQ_KINDS:
        counts = Counter(values)
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
        profile.freq_values = ordered[:top_k]
        if unique <= DISTINCT_CAP:
            profile.distinct_values = [v for v, _ in ordered]
    return profile


def _stats_block(profiles: list[ColumnProfile]) -> str:
    lines = []
    for p in profiles:
        d = p.to_json_dict()
        d.pop("description", None)
        d.pop("distinct_values", None)
        lines.append(json.dumps(d, ensure_ascii=False))
    return "\n".join(lines)


def _parse_descriptions(text: str, known_names: set[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("```"):
            continue
        if ":::" not in line:
            continue
        name, _, desc = line.partition(":::")
        name = name.strip().strip("`").strip()
        desc = " ".join(desc.strip().split())
        if name in known_names and desc:
            out[name] = desc
    return out


def describe_columns(
    table: Table,
    stats: list[ColumnProfile],
    llm: LlmGateway,
    max_rows: int = 10,
    max_cell_chars: int = 80,
    template_dir: str | Path | None = None,
) -> tuple[list[ColumnProfile], bool]:
    """Fill in one-sentence descriptions via the descriptor stage.

    Returns the profiles plus a flag telling whether any column fell back to
    the generic description (unparseable reply after one re-ask, or a column
    missing from the reply).
    """
    prompt = render_prompt(
        "descriptor",
        {
            "table_name": table.name,
            "subset": serialize_subset(table, max_rows, max_cell_chars),
            "stats_block": _stats_block(stats),
        },
        template_dir,
    )
    known = {p.name for p in stats}
    mapping = _parse_descriptions(llm.chat(StageName.DESCRIPTOR, prompt), known)
    if not mapping:
        mapping = _parse_descriptions(llm.chat(StageName.DESCRIPTOR, prompt), known)

    used_fallback = False
    for profile in stats:
        desc = mapping.get(profile.name)
        if desc:
            profile.description = desc
        else:
            profile.description = fallback_description(profile.name, profile.type_label)
            used_fallback = True
    return stats, used_fallback


class ProfileCache:
    """One JSON document per table, keyed by the SHA-256 of the table bytes."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._mem: dict[str, TableProfile] = {}
        self._lock = threading.Lock()

    def _path(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.json"

    def contains(self, fingerprint: str) -> bool:
        with self._lock:
            if fingerprint in self._mem:
                return True
        return self._path(fingerprint).is_file()

    def get(self, fingerprint: str) -> TableProfile | None:
        with self._lock:
            if fingerprint in self._mem:
                return self._mem[fingerprint]
        path = self._path(fingerprint)
        if not path.is_file():
            return None
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            profile = TableProfile(
                table_name=data["table_name"],
                table_fingerprint=data["table_fingerprint"],
                column_profiles=[ColumnProfile.from_json_dict(c) for c in data["columns"]],
                fallback_descriptions=data.get("fallback_descriptions", False),
            )
        except (OSError, ValueError, KeyError) as exc:
            log.warning("profile cache read failed for %s: %s", path, exc)
            return None
        with self._lock:
            self._mem[fingerprint] = profile
        return profile

    def put(self, profile: TableProfile) -> None:
        with self._lock:
            self._mem[profile.table_fingerprint] = profile
        document = {
            "schema_version": SCHEMA_VERSION,
            "table_name": profile.table_name,
            "table_fingerprint": profile.table_fingerprint,
            "fallback_descriptions": profile.fallback_descriptions,
            "columns": [c.to_json_dict() for c in profile.column_profiles],
        }
        path = self._path(profile.table_fingerprint)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(document, fh, ensure_ascii=False, indent=1)
            os.replace(tmp, path)
        except OSError as exc:
            # non-fatal: keep the in-memory profile, warn, move on
            log.warning("profile cache write failed for %s: %s", path, exc)


def profile_table(
    table: Table,
    cache: ProfileCache | None,
    llm: LlmGateway,
    top_k: int = 5,
    max_rows: int = 10,
    max_cell_chars: int = 80,
    template_dir: str | Path | None = None,
) -> TableProfile:
    """Return the cached profile when the fingerprint is known, else compute,
    describe, store, and return."""
    if cache is not None:
        cached = cache.get(table.fingerprint)
        if cached is not None:
            return cached
    stats = [compute_column_stats(col, table.row_count, top_k) for col in table.columns]
    profiles, used_fallback = describe_columns(
        table, stats, llm, max_rows=max_rows, max_cell_chars=max_cell_chars,
        template_dir=template_dir,
    )
    profile = TableProfile(
        table_name=table.name,
        table_fingerprint=table.fingerprint,
        column_profiles=profiles,
        fallback_descriptions=used_fallback,
    )
    if cache is not None:
        cache.put(profile)
    return profile

"""Tabular values: CSV loading, column kind inference, prompt serialization."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import re
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path

from .errors import MalformedCsvError

# A cell is missing (None), boolean, integer, real, or text.
Cell = bool | int | float | str | None

MISSING_MARKER = "<NA>"
ELLIPSIS = "…"

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")

# Boolean pairings: a column is boolean only when all its normalized values
# come from a single positive/negative pair. Numeric 0/1 columns additionally
# need both polarities, so count-like all-ones columns stay integer.
_BOOL_PAIRINGS = (("true", "false"), ("yes", "no"), ("y", "n"), ("t", "f"), ("1", "0"))
_TRUE_TOKENS = frozenset(p for p, _ in _BOOL_PAIRINGS)


class ColumnKind(str, Enum):
    BOOLEAN = "boolean"
    INTEGER = "integer"
    REAL = "real"
    CATEGORICAL = "categorical"
    TEXT = "text"
    DATE_LIKE = "date_like"


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    cells: tuple[Cell, ...]

    def __post_init__(self):
        if not isinstance(self.cells, tuple):
            object.__setattr__(self, "cells", tuple(self.cells))


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    row_count: int
    fingerprint: str = ""

    def __post_init__(self):
        if not isinstance(self.columns, tuple):
            object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise ValueError("column names must be unique within a table")
        for col in self.columns:
            if len(col.cells) != self.row_count:
                raise ValueError(
                    f"column '{col.name}' has {len(col.cells)} cells, expected {self.row_count}"
                )

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


def normalize_bool_token(cell: Cell) -> str:
    return str(cell).strip().lower()


def _boolean_kind(values: list[Cell]) -> bool:
    tokens = {normalize_bool_token(v) for v in values}
    for pos, neg in _BOOL_PAIRINGS:
        if tokens and tokens <= {pos, neg}:
            numeric = any(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
            )
            if numeric and tokens != {"1", "0"}:
                return False
            return True
    return False


def bool_token_value(cell: Cell) -> bool | None:
    """Map a cell to its boolean meaning, or None when it has none."""
    token = normalize_bool_token(cell)
    if token in _TRUE_TOKENS:
        return True
    if any(token == neg for _, neg in _BOOL_PAIRINGS):
        return False
    return None


def _is_iso_date(text: str) -> bool:
    s = text.strip()
    if not re.match(r"^\d{4}-\d{2}-\d{2}$", s):
        return False
    try:
        date.fromisoformat(s)
    except ValueError:
        return False
    return True


def infer_column_kind(cells: list[Cell] | tuple[Cell, ...]) -> ColumnKind:
    """Infer the kind of a column from its cells.

    All-missing or empty input yields text. Text columns are refined to
    categorical when unique/non-missing <= 0.5 or unique <= 20.
    """
    values = [c for c in cells if c is not None]
    if not values:
        return ColumnKind.TEXT
    if _boolean_kind(values):
        return ColumnKind.BOOLEAN
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        if all(isinstance(v, int) for v in values):
            return ColumnKind.INTEGER
        return ColumnKind.REAL
    if all(isinstance(v, str) for v in values) and all(_is_iso_date(v) for v in values):
        return ColumnKind.DATE_LIKE
    unique = len(set(values))
    if unique / len(values) <= 0.5 or unique <= 20:
        return ColumnKind.CATEGORICAL
    return ColumnKind.TEXT


def _dedupe_headers(header: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out: list[str] = []
    taken: set[str] = set()
    for name in header:
        count = seen.get(name, 0) + 1
        seen[name] = count
        candidate = name if count == 1 else f"{name}__{count}"
        while candidate in taken:
            count += 1
            seen[name] = count
            candidate = f"{name}__{count}"
        taken.add(candidate)
        out.append(candidate)
    return out


def _parse_column(raw: list[str | None]) -> list[Cell]:
    values = [s for s in raw if s is not None]
    if not values:
        return list(raw)
    stripped = [s.strip() for s in values]
    if all(_INT_RE.match(s) or _FLOAT_RE.match(s) for s in stripped):
        parsed: list[Cell] = []
        for s in raw:
            if s is None:
                parsed.append(None)
                continue
            t = s.strip()
            if _INT_RE.match(t):
                parsed.append(int(t))
            else:
                value = float(t)
                if math.isinf(value) or math.isnan(value):
                    return list(raw)  # overflow: keep the column textual
                parsed.append(value)
        return parsed
    return list(raw)


def load_table(path: str | Path, format: str = "csv") -> Table:
    """Load a CSV file (RFC-4180, UTF-8, first row is the header) into a Table.

    Empty strings become missing cells. A column parses as numeric only when
    every non-empty cell looks numeric; otherwise all cells stay text.
    """
    if format != "csv":
        raise ValueError(f"unsupported format '{format}'")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such table file: {p}")
    raw_bytes = p.read_bytes()
    fingerprint = hashlib.sha256(raw_bytes).hexdigest()
    try:
        text = raw_bytes.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise MalformedCsvError(f"not valid UTF-8: {exc}") from exc

    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    records: list[tuple[int, list[str]]] = []
    try:
        for rec in reader:
            records.append((reader.line_num, rec))
    except csv.Error as exc:
        raise MalformedCsvError(str(exc), row=reader.line_num) from exc

    if not records:
        raise MalformedCsvError("empty file: header row required", row=1)
    header = records[0][1]
    if not header or all(h == "" for h in header):
        raise MalformedCsvError("empty header row", row=records[0][0])
    names = _dedupe_headers(header)
    ncols = len(names)

    grid: list[list[str | None]] = [[] for _ in range(ncols)]
    row_count = 0
    for line_num, rec in records[1:]:
        if not rec:
            # csv.reader yields [] for blank lines; a blank line in a
            # single-column file is one missing cell, otherwise it is skipped.
            if ncols == 1:
                rec = [""]
            else:
                continue
        if len(rec) != ncols:
            raise MalformedCsvError(
                f"expected {ncols} columns, got {len(rec)}", row=line_num
            )
        row_count += 1
        for j, cell in enumerate(rec):
            grid[j].append(cell if cell != "" else None)

    columns = []
    for name, raw in zip(names, grid):
        cells = _parse_column(raw)
        columns.append(Column(name=name, kind=infer_column_kind(cells), cells=tuple(cells)))
    return Table(name=p.stem, columns=tuple(columns), row_count=row_count, fingerprint=fingerprint)


def _render_cell(cell: Cell, max_cell_chars: int) -> str:
    if cell is None:
        return MISSING_MARKER
    s = str(cell)
    s = s.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
    if len(s) > max_cell_chars:
        s = s[:max_cell_chars] + ELLIPSIS
    return s


def serialize_subset(table: Table, max_rows: int, max_cell_chars: int = 80) -> str:
    """Render the header plus the first min(max_rows, row_count) rows.

    Pipe-delimited; missing cells render as <NA>; long cells are truncated
    with a trailing ellipsis.
    """
    if max_rows < 1:
        raise ValueError("max_rows must be >= 1")
    if max_cell_chars < 1:
        raise ValueError("max_cell_chars must be >= 1")
    lines = [" | ".join(_render_cell(c.name, max_cell_chars) for c in table.columns)]
    for i in range(min(max_rows, table.row_count)):
        lines.append(
            " | ".join(_render_cell(c.cells[i], max_cell_chars) for c in table.columns)
        )
    return "\n".join(lines)

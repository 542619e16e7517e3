"""Totalizing conversion of arbitrary return values into JSON-representable
values tagged with one of: bool, int, float, string, list, null, other."""
from __future__ import annotations

import datetime as _dt
import math
from decimal import Decimal

import numpy as np
import pandas as pd

MAX_DEPTH = 32


def _is_missing(value) -> bool:
    if value is None:
        return True
    try:
        missing = pd.isna(value)
    except (TypeError, ValueError):
        return False
    return bool(missing) if isinstance(missing, (bool, np.bool_)) else False


def serialize_value(value, _depth: int = 0):
    """Return (json_value, kind). Never raises: anything without a natural
    JSON shape is stringified with kind 'other'."""
    try:
        return _serialize(value, _depth)
    except Exception:
        try:
            return str(value), "other"
        except Exception:
            return "<unserializable>", "other"


def _serialize(value, depth: int):
    if depth > MAX_DEPTH:
        return str(value), "other"
    if _is_missing(value):
        return None, "null"
    if isinstance(value, (np.bool_,)):
        return bool(value), "bool"
    if isinstance(value, bool):
        return value, "bool"
    if isinstance(value, (np.integer,)):
        return int(value), "int"
    if isinstance(value, int):
        return value, "int"
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return None, "null"
        return value, "float"
    if isinstance(value, Decimal):
        return float(value), "float"
    if isinstance(value, str):
        return value, "string"
    if isinstance(value, (pd.Timestamp, _dt.datetime, _dt.date, _dt.time)):
        return value.isoformat(), "string"
    if isinstance(value, _dt.timedelta):
        return str(value), "string"
    if isinstance(value, (pd.Series, pd.Index)):
        return _serialize_sequence(value.tolist(), depth)
    if isinstance(value, np.ndarray):
        return _serialize_sequence(value.tolist(), depth)
    if isinstance(value, pd.DataFrame):
        if value.shape[1] == 1:
            return _serialize_sequence(value.iloc[:, 0].tolist(), depth)
        return value.to_string(), "other"
    if isinstance(value, (list, tuple, set, frozenset)):
        return _serialize_sequence(list(value), depth)
    if isinstance(value, np.generic):
        return _serialize(value.item(), depth + 1)
    return str(value), "other"


def _serialize_sequence(items, depth: int):
    out = []
    for item in items:
        encoded, kind = serialize_value(item, depth + 1)
        out.append(encoded)
    return out, "list"

"""The three harness operations: check, run, convert."""
from __future__ import annotations

import ast
import io
import os
import sys
import tempfile
import traceback as _traceback
from pathlib import Path

import pandas as pd

from .serialize import serialize_value

FUNCTION_NAME = "parse_dataframe"
MAX_TRACEBACK_CHARS = 4000
MAX_CAPTURED_STDOUT = 2000


def _error(error_type: str, message: str, traceback_text: str | None = None) -> dict:
    return {
        "ok": False,
        "error_type": error_type,
        "error_message": message,
        "traceback": traceback_text,
    }


def op_check(code: str) -> dict:
    """ok iff the code compiles and defines parse_dataframe with exactly one
    parameter. Extra helper definitions are tolerated; only parse_dataframe is
    ever invoked."""
    try:
        tree = ast.parse(code or "")
    except SyntaxError as exc:
        return _error(
            "SyntaxError", f"{exc.msg} (line {exc.lineno}, offset {exc.offset})"
        )
    functions = [
        node for node in tree.body
        if isinstance(node, ast.FunctionDef) and node.name == FUNCTION_NAME
    ]
    if not functions:
        return _error("ContractViolation", f"no {FUNCTION_NAME} function defined")
    args = functions[0].args
    n_positional = len(args.posonlyargs) + len(args.args)
    if n_positional + len(args.kwonlyargs) != 1 or args.vararg or args.kwarg:
        return _error(
            "ContractViolation", f"{FUNCTION_NAME} must take exactly one parameter"
        )
    return {"ok": True}


def _trim_traceback(exc: BaseException) -> str:
    lines = _traceback.format_exception(type(exc), exc, exc.__traceback__)
    # drop harness frames; keep everything from the generated code down
    kept = []
    in_generated = False
    for line in lines:
        if 'File "<generated>"' in line:
            in_generated = True
        if in_generated or not line.startswith("  File"):
            kept.append(line)
    text = "".join(kept) if kept else "".join(lines)
    return text[-MAX_TRACEBACK_CHARS:]


def op_run(code: str, table_path: str) -> dict:
    """Load the table, call parse_dataframe(df), serialize the return value.

    Generated-code prints are captured: included in the traceback on error,
    discarded otherwise. Each execution runs in a fresh working directory.
    The timeout is enforced by the supervising process, not here.
    """
    checked = op_check(code)
    if not checked.get("ok"):
        return checked
    try:
        df = pd.read_csv(table_path)
    except Exception as exc:  # noqa: BLE001
        return _error("TableLoadError", str(exc))

    namespace = {"pd": pd}
    workdir = tempfile.mkdtemp(prefix="mrt-run-")
    old_cwd = os.getcwd()
    captured = io.StringIO()
    real_stdout = sys.stdout
    try:
        os.chdir(workdir)
        sys.stdout = captured
        exec(compile(code, "<generated>", "exec"), namespace)
        value = namespace[FUNCTION_NAME](df)
    except BaseException as exc:  # noqa: BLE001 - every failure becomes a reply
        trace = _trim_traceback(exc)
        printed = captured.getvalue()
        if printed:
            trace += "\n--- captured stdout ---\n" + printed[-MAX_CAPTURED_STDOUT:]
        return _error(type(exc).__name__, str(exc), trace)
    finally:
        sys.stdout = real_stdout
        os.chdir(old_cwd)
        _cleanup(workdir)
    encoded, kind = serialize_value(value)
    return {"ok": True, "value": encoded, "value_kind": kind}


def _cleanup(workdir: str) -> None:
    import shutil

    try:
        shutil.rmtree(workdir)
    except OSError:
        pass


def _default_out_path(path_in: Path) -> Path:
    out = path_in.with_suffix(".csv")
    if out == path_in:
        out = path_in.with_name(path_in.stem + "_converted.csv")
    return out


def op_convert(table_path_in: str, table_path_out: str | None = None) -> dict:
    """Rewrite a Parquet or CSV table as RFC-4180 CSV (UTF-8, NA cells empty)."""
    path_in = Path(table_path_in)
    try:
        suffix = path_in.suffix.lower()
        if suffix in (".parquet", ".pq"):
            df = pd.read_parquet(path_in)
        elif suffix == ".csv":
            df = pd.read_csv(path_in)
        else:
            try:
                df = pd.read_parquet(path_in)
            except Exception:  # noqa: BLE001
                df = pd.read_csv(path_in)
        path_out = Path(table_path_out) if table_path_out else _default_out_path(path_in)
        df.to_csv(path_out, index=False, na_rep="", encoding="utf-8")
    except Exception as exc:  # noqa: BLE001
        return _error("ConvertError", str(exc))
    return {"ok": True, "value": str(path_out), "value_kind": "string"}

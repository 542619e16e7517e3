"""JSON-lines request loop: banner first, then one reply per request line.

The protocol stream is the saved stdout handle; generated code never writes
to it. Strictly single-threaded and order-preserving; parallelism comes from
running several harness processes.
"""
from __future__ import annotations

import json
import sys

from . import PROTOCOL_VERSION
from .ops import op_check, op_convert, op_run

_PROTOCOL_OUT = sys.stdout

REPLY_FIELDS = ("value", "value_kind", "error_type", "error_message", "traceback")


def _emit(request_id, result: dict) -> None:
    reply = {"id": request_id, "ok": bool(result.get("ok"))}
    for key in REPLY_FIELDS:
        reply[key] = result.get(key)
    try:
        line = json.dumps(reply, ensure_ascii=False, allow_nan=False)
    except (TypeError, ValueError):
        # belt and braces: the serializer is total, but the reply must go out
        # even if something unencodable slipped through
        reply["value"] = str(reply.get("value"))
        reply["value_kind"] = "other"
        line = json.dumps(reply, ensure_ascii=False, allow_nan=False)
    _PROTOCOL_OUT.write(line + "\n")
    _PROTOCOL_OUT.flush()


def _dispatch(request: dict) -> dict:
    op = request.get("op")
    if op == "check":
        return op_check(request.get("code") or "")
    if op == "run":
        return op_run(request.get("code") or "", request.get("table_path") or "")
    if op == "convert":
        return op_convert(
            request.get("table_path") or "", request.get("table_path_out")
        )
    return {
        "ok": False,
        "error_type": "ProtocolError",
        "error_message": f"unsupported op {op!r}",
    }


def main() -> int:
    _PROTOCOL_OUT.write(json.dumps({"hello": PROTOCOL_VERSION}) + "\n")
    _PROTOCOL_OUT.flush()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            _emit(None, {"ok": False, "error_type": "ProtocolError",
                         "error_message": "request line is not valid JSON"})
            continue
        try:
            result = _dispatch(request)
        except Exception as exc:  # noqa: BLE001 - the loop must never die mid-request
            result = {"ok": False, "error_type": "HarnessInternalError",
                      "error_message": str(exc)}
        _emit(request.get("id"), result)
    return 0


if __name__ == "__main__":
    sys.exit(main())

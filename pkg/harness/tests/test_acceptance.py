"""Acceptance gate for the harness: protocol conformance transcript plus
serialization totality, inside the stated time budget."""
from __future__ import annotations

import json
import random
import time

import pandas as pd
import pytest

import test_serialize
from conftest import REPLY_KEYS, HarnessProcess
from mrt_harness.serialize import serialize_value


def _shape_ok(reply: dict, ok: bool) -> None:
    assert list(reply.keys()) == REPLY_KEYS
    assert reply["ok"] is ok
    if ok:
        assert reply["error_type"] is None and reply["error_message"] is None
        assert reply["traceback"] is None
    else:
        assert reply["error_type"] and reply["error_message"] is not None
        assert reply["value"] is None


def test_harness_protocol_conformance_and_totality(tmp_path, capsys):
    started = time.perf_counter()

    table = tmp_path / "t.csv"
    table.write_text("a,b\n1,x\n2,y\n3,z\n", encoding="utf-8")
    ok_code = "def parse_dataframe(df):\n    return str(len(df))\n"

    proc = HarnessProcess()
    try:
        assert proc.banner == {"hello": 1}
        _shape_ok(proc.request(id="a1", op="check", code=ok_code,
                               table_path=None, timeout_s=10), ok=True)
        reply = proc.request(id="a2", op="check",
                             code="def parse_dataframe(df)\n    return 1\n",
                             table_path=None, timeout_s=10)
        _shape_ok(reply, ok=False)
        assert reply["error_type"] == "SyntaxError"
        reply = proc.request(id="a3", op="run", code=ok_code,
                             table_path=str(table), timeout_s=10)
        _shape_ok(reply, ok=True)
        assert reply["value"] == "3" and reply["value_kind"] == "string"
        reply = proc.request(id="a4", op="run",
                             code="def parse_dataframe(df):\n    return 1 / 0\n",
                             table_path=str(table), timeout_s=10)
        _shape_ok(reply, ok=False)
        assert reply["error_type"] == "ZeroDivisionError"

        # timeout-kill by the supervisor: no reply arrives, the process dies
        sleeper = HarnessProcess()
        sleeper.send(id="a5", op="run",
                     code="def parse_dataframe(df):\n    import time\n    time.sleep(60)\n",
                     table_path=str(table), timeout_s=0.5)
        with pytest.raises(TimeoutError):
            sleeper._read_line(timeout=0.8)
        sleeper.kill()
        assert sleeper.proc.poll() is not None

        parquet = tmp_path / "t.parquet"
        pd.DataFrame({"n": range(9)}).to_parquet(parquet)
        reply = proc.request(id="a6", op="convert", code=None,
                             table_path=str(parquet), timeout_s=30)
        _shape_ok(reply, ok=True)
        assert len(pd.read_csv(reply["value"])) == 9
    finally:
        proc.close()

    # serialization totality: 500 fuzzed return values, zero encoder crashes
    generator = test_serialize.TestTotality()
    rng = random.Random(987654)
    for _ in range(500):
        encoded, kind = serialize_value(generator._random_value(rng))
        assert kind in test_serialize.KINDS
        json.dumps(encoded, allow_nan=False)

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"harness acceptance took {elapsed:.2f}s"
    print(f"ACCEPTANCE PASS: harness protocol conformance + serialization totality ({elapsed:.2f}s < 30.0s)")

"""Supervises a harness subprocess speaking the JSON-lines check/run/convert protocol.

One harness per worker; the supervisor owns the timeout contract: a request
that misses its deadline kills the process, and a dead process is respawned
before the next request.
"""
from __future__ import annotations

import json
import queue
import subprocess
import threading
import time
from collections import Counter
from dataclasses import dataclass

from .errors import HarnessCrashedError

PROTOCOL_VERSION = 1
DEFAULT_CHECK_TIMEOUT_S = 30.0


class HarnessTimeout(Exception):
    """Internal signal: the run exceeded its deadline and the process was killed."""


@dataclass
class HarnessReply:
    ok: bool
    value: object = None
    value_kind: str | None = None
    error_type: str | None = None
    error_message: str | None = None
    traceback: str | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "HarnessReply":
        return cls(
            ok=bool(obj.get("ok")),
            value=obj.get("value"),
            value_kind=obj.get("value_kind"),
            error_type=obj.get("error_type"),
            error_message=obj.get("error_message"),
            traceback=obj.get("traceback"),
        )


class Harness:
    def __init__(self, command: list[str], cwd: str | None = None, spawn_timeout_s: float = 15.0):
        self.command = list(command)
        self.cwd = cwd
        self.spawn_timeout_s = spawn_timeout_s
        self.requests_sent: Counter[str] = Counter()
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._next_id = 0
        self._lock = threading.Lock()

    # -- process lifecycle -------------------------------------------------

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _spawn(self) -> None:
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
            cwd=self.cwd,
        )
        lines: queue.Queue = queue.Queue()
        self._lines = lines
        proc = self._proc

        def _pump():
            for line in proc.stdout:
                lines.put(line)
            lines.put(None)  # EOF sentinel

        threading.Thread(target=_pump, daemon=True).start()
        banner = self._read_json(self.spawn_timeout_s)
        if banner is None or banner.get("hello") != PROTOCOL_VERSION:
            self._kill()
            raise HarnessCrashedError(
                f"harness {self.command!r} did not announce the protocol banner"
            )

    def _ensure(self) -> None:
        if not self._alive():
            self._kill()
            self._spawn()

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except OSError:
                pass
        self._proc = None
        self._lines = None

    def close(self) -> None:
        self._kill()

    def __enter__(self) -> "Harness":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    # -- protocol ----------------------------------------------------------

    def _read_json(self, timeout_s: float) -> dict | None:
        deadline = time.monotonic() + timeout_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                return None
            if line is None:
                raise HarnessCrashedError("harness process closed its output stream")
            line = line.strip()
            if not line:
                continue
            try:
                return json.loads(line)
            except ValueError as exc:
                raise HarnessCrashedError(f"harness wrote a non-protocol line: {line[:200]}") from exc

    def _request(self, payload: dict, timeout_s: float) -> dict:
        with self._lock:
            self._ensure()
            self._next_id += 1
            request_id = f"r{self._next_id}"
            payload = {"id": request_id, **payload}
            self.requests_sent[payload["op"]] += 1
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                self._kill()
                raise HarnessCrashedError(f"could not write to harness: {exc}") from exc
            deadline = time.monotonic() + timeout_s
            while True:
                remaining = max(deadline - time.monotonic(), 0.0)
                try:
                    obj = self._read_json(remaining)
                except HarnessCrashedError:
                    self._kill()
                    raise
                if obj is None:
                    self._kill()  # deadline passed: kill now, respawn lazily
                    raise HarnessTimeout(f"no reply within {timeout_s} s")
                if obj.get("id") == request_id:
                    return obj

    def check(self, code: str, timeout_s: float = DEFAULT_CHECK_TIMEOUT_S) -> HarnessReply:
        obj = self._request({"op": "check", "code": code, "table_path": None, "timeout_s": timeout_s}, timeout_s)
        return HarnessReply.from_json(obj)

    def run(self, code: str, table_path: str, timeout_s: float) -> HarnessReply:
        """Execute parse_dataframe against the table. Raises HarnessTimeout when
        the deadline passes (the process is killed) and HarnessCrashedError when
        the process dies without a reply."""
        obj = self._request(
            {"op": "run", "code": code, "table_path": str(table_path), "timeout_s": timeout_s},
            timeout_s,
        )
        return HarnessReply.from_json(obj)

    def convert(self, table_path: str, out_path: str | None = None, timeout_s: float = 120.0) -> HarnessReply:
        payload = {"op": "convert", "code": None, "table_path": str(table_path), "timeout_s": timeout_s}
        if out_path is not None:
            payload["table_path_out"] = str(out_path)
        obj = self._request(payload, timeout_s)
        return HarnessReply.from_json(obj)

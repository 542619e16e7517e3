from __future__ import annotations

import json
import subprocess
import sys

import pytest

HARNESS_CMD = [sys.executable, "-m", "mrt_harness"]

REPLY_KEYS = ["id", "ok", "value", "value_kind", "error_type", "error_message", "traceback"]


class HarnessProcess:
    """Raw protocol driver for tests: no dependency on the orchestrator package."""

    def __init__(self):
        self.proc = subprocess.Popen(
            HARNESS_CMD,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self.banner = json.loads(self._read_line(timeout=15))

    def _read_line(self, timeout: float) -> str:
        import threading

        box: list[str | None] = []

        def _read():
            box.append(self.proc.stdout.readline())

        thread = threading.Thread(target=_read, daemon=True)
        thread.start()
        thread.join(timeout)
        if not box or not box[0]:
            raise TimeoutError("no line from harness")
        return box[0]

    def send(self, **payload) -> None:
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()

    def request(self, timeout: float = 30.0, **payload) -> dict:
        self.send(**payload)
        return json.loads(self._read_line(timeout))

    def kill(self) -> None:
        self.proc.kill()
        self.proc.wait(timeout=5)

    def close(self) -> None:
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self.kill()


@pytest.fixture
def harness_proc():
    proc = HarnessProcess()
    yield proc
    proc.close()

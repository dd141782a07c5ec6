from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest

DEFAULT_LIMITS = {"wall_time_ms": 2000, "memory_bytes": 256 * 2**20, "output_chars": 2048}


class WorkerProc:
    """Drive one worker subprocess over its line-delimited JSON protocol."""

    def __init__(self, scratch_dir, extra_args=()):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "sandbox_worker", "--scratch-dir", str(scratch_dir),
             "--cpu-seconds", "30", *extra_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
        )
        self.counter = 0

    def send_raw(self, line: str) -> None:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def request(self, source: str, fn_name: str, surface: str,
                limits: dict | None = None, timeout: float = 15.0) -> dict:
        self.counter += 1
        req = {
            "id": f"t{self.counter}",
            "source": source,
            "fn_name": fn_name,
            "bindings_surface": surface,
            "limits": limits or DEFAULT_LIMITS,
        }
        self.send_raw(json.dumps(req))
        line = self._read_line(timeout)
        resp = json.loads(line)
        assert resp["id"] == req["id"]
        return resp

    def _read_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        line = self.proc.stdout.readline()
        if not line and time.monotonic() > deadline:
            raise TimeoutError("worker did not answer")
        if not line:
            raise RuntimeError(f"worker died, exit={self.proc.poll()}")
        return line

    def close_stdin(self) -> None:
        self.proc.stdin.close()

    def wait(self, timeout: float = 10.0) -> int:
        return self.proc.wait(timeout=timeout)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait(timeout=5)


@pytest.fixture
def worker(tmp_path):
    scratch = tmp_path / "scratch"
    scratch.mkdir()
    w = WorkerProc(scratch)
    yield w
    w.kill()

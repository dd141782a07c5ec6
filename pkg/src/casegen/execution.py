"""Run functions on their input cases and classify the outcome sets.

Execution is delegated through a narrow Executor interface: a table-backed
stub (no code is ever run), or a pool of isolated worker processes spoken
to over line-delimited JSON. Validity filtering rejects functions whose
outputs carry no signal: constant outputs, all-error runs, overlong
outputs, and nondeterministic behavior.
"""

from __future__ import annotations

import json
import logging
import os
import selectors
import shutil
import subprocess
import sys
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from queue import Queue
from typing import Protocol

from .inputgen import InputCase

log = logging.getLogger(__name__)

DEFAULT_WALL_TIME_MS = 2000
DEFAULT_MEMORY_BYTES = 256 * 2**20
DEFAULT_OUTPUT_CHARS = 2048
# Wall-clock kill fires this long after the limit; kept under the 500 ms
# containment bound so TIMEOUT outcomes land inside limit + 500 ms even
# when the worker's own timer cannot interrupt the running code.
SCHEDULING_SLACK_MS = 400


class Status(str, Enum):
    OK = "OK"
    EXCEPTION = "EXCEPTION"
    TIMEOUT = "TIMEOUT"
    OOM = "OOM"
    CRASH = "CRASH"


class Verdict(str, Enum):
    VALID = "VALID"
    CONSTANT_OUTPUT = "CONSTANT_OUTPUT"
    ALL_ERROR = "ALL_ERROR"
    OVERLONG = "OVERLONG"
    NONDETERMINISTIC = "NONDETERMINISTIC"


@dataclass(frozen=True)
class Limits:
    wall_time_ms: int = DEFAULT_WALL_TIME_MS
    memory_bytes: int = DEFAULT_MEMORY_BYTES
    output_chars: int = DEFAULT_OUTPUT_CHARS

    def __post_init__(self) -> None:
        if min(self.wall_time_ms, self.memory_bytes, self.output_chars) <= 0:
            raise ValueError("limits must be strictly positive")

    def to_json(self) -> dict:
        return {
            "wall_time_ms": self.wall_time_ms,
            "memory_bytes": self.memory_bytes,
            "output_chars": self.output_chars,
        }


@dataclass(frozen=True)
class ExecRequest:
    fn_id: str
    source: str
    fn_name: str
    case: InputCase
    limits: Limits = field(default_factory=Limits)


@dataclass
class CaseOutcome:
    """Result of one function call: output text, exception, or failure status."""

    case: InputCase
    status: Status
    output_canonical: str | None = None
    exception: dict | None = None  # {"type_name", "message"}
    duration_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "case": self.case.to_json(),
            "status": self.status.value,
            "output_canonical": self.output_canonical,
            "exception": self.exception,
            "duration_ms": self.duration_ms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CaseOutcome":
        return cls(
            case=InputCase.from_json(obj["case"]),
            status=Status(obj["status"]),
            output_canonical=obj.get("output_canonical"),
            exception=obj.get("exception"),
            duration_ms=obj.get("duration_ms", 0.0),
        )


@dataclass
class FunctionCaseSet:
    fn_id: str
    outcomes: list[CaseOutcome]
    verdict: Verdict

    def to_json(self) -> dict:
        return {
            "fn_id": self.fn_id,
            "outcomes": [o.to_json() for o in self.outcomes],
            "verdict": self.verdict.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionCaseSet":
        return cls(
            fn_id=obj["fn_id"],
            outcomes=[CaseOutcome.from_json(o) for o in obj["outcomes"]],
            verdict=Verdict(obj["verdict"]),
        )


class Executor(Protocol):
    def submit(self, req: ExecRequest) -> CaseOutcome: ...


# ---------------------------------------------------------------------------
# Validity classification
# ---------------------------------------------------------------------------

def classify_validity(
    outcomes: list[CaseOutcome],
    limits: Limits,
    probe_mismatch: bool = False,
) -> Verdict:
    """Classify an outcome set, checking the cheap knockouts first.

    Exception-bearing cases inside an otherwise valid set are retained;
    only sets with no signal at all are rejected.
    """
    if not outcomes:
        raise ValueError("outcomes must be non-empty")
    ok = [o for o in outcomes if o.status == Status.OK]
    if not ok:
        return Verdict.ALL_ERROR
    distinct = {o.output_canonical for o in ok}
    if len(distinct) == 1:
        return Verdict.CONSTANT_OUTPUT
    if any(len(o.output_canonical or "") >= limits.output_chars for o in ok):
        return Verdict.OVERLONG
    if probe_mismatch:
        return Verdict.NONDETERMINISTIC
    return Verdict.VALID


def execute_all(rec, cases: list[InputCase], ex: Executor, limits: Limits | None = None) -> FunctionCaseSet:
    """Execute every case in order, probe for nondeterminism, classify.

    ``rec`` is a FunctionRecord; executor transport failures surface as
    CRASH outcomes for the affected case and never stop the set.
    """
    if not cases:
        raise ValueError("cases must be non-empty")
    limits = limits or Limits()
    outcomes: list[CaseOutcome] = []
    for case in cases:
        req = ExecRequest(fn_id=rec.fn_id, source=rec.source, fn_name=rec.name, case=case, limits=limits)
        try:
            outcome = ex.submit(req)
        except Exception as exc:  # transport trouble, not user code
            log.warning("executor failure for %s/%s: %s", rec.fn_id, case.case_id, exc)
            outcome = CaseOutcome(case=case, status=Status.CRASH)
        outcomes.append(outcome)

    probe_mismatch = False
    first_ok = next((o for o in outcomes if o.status == Status.OK), None)
    if first_ok is not None:
        req = ExecRequest(
            fn_id=rec.fn_id, source=rec.source, fn_name=rec.name, case=first_ok.case, limits=limits,
        )
        try:
            again = ex.submit(req)
            probe_mismatch = (
                again.status != Status.OK or again.output_canonical != first_ok.output_canonical
            )
        except Exception:
            probe_mismatch = True

    verdict = classify_validity(outcomes, limits, probe_mismatch)
    return FunctionCaseSet(fn_id=rec.fn_id, outcomes=outcomes, verdict=verdict)


# ---------------------------------------------------------------------------
# Stub executor
# ---------------------------------------------------------------------------

class StubExecutor:
    """Answer submissions from a fixed (fn_id, case_id) -> outcome table.

    Lets the full pipeline run with no worker built; unknown keys come
    back as CRASH.
    """

    def __init__(self, table: dict[tuple[str, str], CaseOutcome]):
        self.table = dict(table)

    def submit(self, req: ExecRequest) -> CaseOutcome:
        hit = self.table.get((req.fn_id, req.case.case_id))
        if hit is None:
            return CaseOutcome(case=req.case, status=Status.CRASH)
        return CaseOutcome(
            case=req.case,
            status=hit.status,
            output_canonical=hit.output_canonical,
            exception=hit.exception,
            duration_ms=hit.duration_ms,
        )


def stub_executor(table: dict[tuple[str, str], CaseOutcome]) -> StubExecutor:
    return StubExecutor(table)


def load_stub_table(path) -> dict[tuple[str, str], CaseOutcome]:
    """Read a stub table from JSON-Lines rows keyed by fn_id/case_id."""
    table: dict[tuple[str, str], CaseOutcome] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            placeholder = InputCase(case_id=obj["case_id"], bindings={}, surface="dict()", origin="LLM")
            table[(obj["fn_id"], obj["case_id"])] = CaseOutcome(
                case=placeholder,
                status=Status(obj["status"]),
                output_canonical=obj.get("output"),
                exception=obj.get("exception"),
                duration_ms=obj.get("duration_ms", 0.0),
            )
    return table


def dump_stub_table(table: dict[tuple[str, str], CaseOutcome], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (fn_id, case_id), outcome in sorted(table.items()):
            fh.write(json.dumps({
                "fn_id": fn_id,
                "case_id": case_id,
                "status": outcome.status.value,
                "output": outcome.output_canonical,
                "exception": outcome.exception,
                "duration_ms": outcome.duration_ms,
            }, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Worker-pool executor (wire protocol over stdio)
# ---------------------------------------------------------------------------

def default_worker_command() -> list[str]:
    return [sys.executable, "-m", "sandbox_worker"]


class _WorkerHandle:
    """One sandbox process plus its line-oriented protocol state."""

    def __init__(self, cmd: list[str], scratch_root: str):
        self.scratch_dir = tempfile.mkdtemp(prefix="wkr_", dir=scratch_root)
        self.proc = subprocess.Popen(
            cmd + ["--scratch-dir", self.scratch_dir],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=False,
        )
        self.requests_served = 0
        self._buf = b""

    def send(self, obj: dict) -> None:
        assert self.proc.stdin is not None
        line = json.dumps(obj, ensure_ascii=False).encode("utf-8") + b"\n"
        self.proc.stdin.write(line)
        self.proc.stdin.flush()

    def read_line(self, deadline: float) -> bytes | None:
        """Read one response line; None on timeout or worker death."""
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buf:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                if not sel.select(timeout=remaining):
                    continue
                chunk = os.read(fd, 65536)
                if not chunk:
                    return None
                self._buf += chunk
        finally:
            sel.close()
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def kill(self) -> None:
        try:
            self.proc.kill()
            self.proc.wait(timeout=5)
        except Exception:
            pass
        shutil.rmtree(self.scratch_dir, ignore_errors=True)

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=2)
        except Exception:
            self.proc.kill()
        shutil.rmtree(self.scratch_dir, ignore_errors=True)


class WorkerPoolExecutor:
    """Pool of worker processes, one in-flight request per worker.

    Thread-safe: concurrent submitters each borrow a worker from the
    free queue. Workers are restarted after CRASH/OOM/timeouts and after
    a bounded number of requests to cap state leakage.
    """

    def __init__(
        self,
        pool_size: int = 4,
        worker_cmd: list[str] | None = None,
        max_requests_per_worker: int = 200,
        cpu_seconds: int = 60,
        address_space_bytes: int = 512 * 2**20,
        allow_modules: list[str] | None = None,
        scratch_root: str | None = None,
    ):
        self.pool_size = pool_size
        self.max_requests_per_worker = max_requests_per_worker
        self._scratch_root = scratch_root or tempfile.mkdtemp(prefix="pool_")
        self._owns_root = scratch_root is None
        base_cmd = list(worker_cmd) if worker_cmd else default_worker_command()
        self._cmd = base_cmd + [
            "--cpu-seconds", str(cpu_seconds),
            "--address-space-bytes", str(address_space_bytes),
        ]
        if allow_modules is not None:
            self._cmd += ["--allow-modules", ",".join(allow_modules)]
        self._free: Queue[_WorkerHandle] = Queue()
        self._lock = threading.Lock()
        self._closed = False
        for _ in range(pool_size):
            self._free.put(self._spawn())

    def _spawn(self) -> _WorkerHandle:
        return _WorkerHandle(self._cmd, self._scratch_root)

    def submit(self, req: ExecRequest) -> CaseOutcome:
        worker = self._free.get()
        restart = False
        try:
            outcome, restart = self._roundtrip(worker, req)
            return outcome
        finally:
            with self._lock:
                closed = self._closed
            if closed:
                worker.kill()
            else:
                if not restart and worker.requests_served >= self.max_requests_per_worker:
                    restart = True
                if restart:
                    worker.kill()
                    worker = self._spawn()
                self._free.put(worker)

    def _roundtrip(self, worker: _WorkerHandle, req: ExecRequest) -> tuple[CaseOutcome, bool]:
        req_id = f"{req.fn_id}:{req.case.case_id}:{uuid.uuid4().hex[:8]}"
        wire = {
            "id": req_id,
            "source": req.source,
            "fn_name": req.fn_name,
            "bindings_surface": req.case.surface,
            "limits": req.limits.to_json(),
        }
        try:
            worker.send(wire)
        except (BrokenPipeError, OSError):
            return CaseOutcome(case=req.case, status=Status.CRASH), True

        deadline = time.monotonic() + (req.limits.wall_time_ms + SCHEDULING_SLACK_MS) / 1000.0
        line = worker.read_line(deadline)
        worker.requests_served += 1
        if line is None:
            if worker.proc.poll() is not None:
                # Worker died mid-request (rlimit kill, hard crash).
                status = Status.OOM if worker.proc.returncode and -worker.proc.returncode == 9 else Status.CRASH
                return CaseOutcome(case=req.case, status=status), True
            return CaseOutcome(case=req.case, status=Status.TIMEOUT,
                               duration_ms=float(req.limits.wall_time_ms)), True
        try:
            resp = json.loads(line.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return CaseOutcome(case=req.case, status=Status.CRASH), True
        if resp.get("id") != req_id:
            return CaseOutcome(case=req.case, status=Status.CRASH), True

        try:
            status = Status(resp["status"])
        except (KeyError, ValueError):
            return CaseOutcome(case=req.case, status=Status.CRASH), True
        outcome = CaseOutcome(
            case=req.case,
            status=status,
            output_canonical=resp.get("output") if status == Status.OK else None,
            exception=resp.get("exception") if status == Status.EXCEPTION else None,
            duration_ms=float(resp.get("duration_ms", 0.0)),
        )
        return outcome, status in {Status.CRASH, Status.OOM}

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        while not self._free.empty():
            self._free.get_nowait().close()
        if self._owns_root:
            shutil.rmtree(self._scratch_root, ignore_errors=True)

    def __enter__(self) -> "WorkerPoolExecutor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

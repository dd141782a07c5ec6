"""Serve loop: one JSON request line in, one JSON response line out."""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile

from .runtime import (
    DEFAULT_ALLOWED_MODULES,
    WorkerEnv,
    apply_startup_rlimits,
    install_alarm_handler,
    run_function_on_input,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sandbox-worker")
    parser.add_argument("--scratch-dir", default=None,
                        help="writable directory for executed code (default: fresh temp dir)")
    parser.add_argument("--cpu-seconds", type=int, default=60,
                        help="process-lifetime CPU rlimit")
    parser.add_argument("--address-space-bytes", type=int, default=512 * 2**20,
                        help="hard address-space rlimit")
    parser.add_argument("--allow-modules", default=None,
                        help="comma-separated module allowlist override")
    return parser


def serve(env: WorkerEnv, stdin=None, stdout=None) -> int:
    # The protocol is UTF-8 regardless of the inherited locale.
    if stdin is None:
        stdin = io.TextIOWrapper(sys.stdin.buffer, encoding="utf-8")
    if stdout is None:
        stdout = io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8", write_through=True)
    while True:
        line = stdin.readline()
        if not line:
            return 0
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            # No id to answer with; die and let the orchestrator restart us.
            return 1
        req_id = request.get("id")
        try:
            fields = run_function_on_input(
                source=request["source"],
                fn_name=request["fn_name"],
                bindings_surface=request["bindings_surface"],
                limits=request.get("limits") or {},
                env=env,
            )
        except (KeyError, TypeError):
            fields = {"status": "CRASH", "output": None, "exception": None, "duration_ms": 0.0}
        response = {"id": req_id, **fields}
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    scratch = args.scratch_dir or tempfile.mkdtemp(prefix="sandbox_")
    os.makedirs(scratch, exist_ok=True)
    os.chdir(scratch)

    allowed = DEFAULT_ALLOWED_MODULES
    if args.allow_modules is not None:
        allowed = frozenset(m.strip() for m in args.allow_modules.split(",") if m.strip())

    # Warm allowed modules before the address-space clamp: imports after
    # rlimit tightening could fail spuriously inside user requests.
    for module in sorted(allowed):
        try:
            __import__(module)
        except ImportError:
            pass

    install_alarm_handler()
    apply_startup_rlimits(args.cpu_seconds, args.address_space_bytes)
    env = WorkerEnv(scratch_dir=scratch, allowed_modules=allowed)
    return serve(env)


if __name__ == "__main__":
    sys.exit(main())

"""Restricted execution environment and the single-request runner.

Isolation layers: a builtins allowlist with a module import gate and a
scratch-dir-restricted open, address-space/CPU rlimits, and a wall-clock
timer per request. The orchestrator's kill-on-overrun is the backstop
for anything these cannot interrupt.
"""

from __future__ import annotations

import builtins as _builtins
import contextlib
import os
import resource
import signal
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .canonical import CanonicalizationError, SurfaceParseError, canonical_text, parse_binding_surface

# Modules importable by executed code: pure computation only.
DEFAULT_ALLOWED_MODULES = frozenset({
    "abc", "array", "bisect", "cmath", "collections", "copy", "decimal",
    "enum", "fractions", "functools", "heapq", "itertools", "json", "keyword",
    "math", "numbers", "operator", "re", "statistics", "string", "struct",
    "textwrap", "typing", "unicodedata",
})

# Builtins exposed to executed code. Introspection hooks that reach the
# host interpreter (eval/exec/compile, globals, vars, __import__, id) are
# deliberately absent; open and __import__ get guarded replacements.
SAFE_BUILTIN_NAMES = (
    "abs", "all", "any", "ascii", "bin", "bool", "bytearray", "bytes",
    "callable", "chr", "classmethod", "complex", "dict", "divmod",
    "enumerate", "filter", "float", "format", "frozenset", "getattr",
    "hasattr", "hash", "hex", "int", "isinstance", "issubclass", "iter",
    "len", "list", "map", "max", "min", "next", "object", "oct", "ord",
    "pow", "print", "property", "range", "repr", "reversed", "round",
    "set", "setattr", "slice", "sorted", "staticmethod", "str", "sum",
    "super", "tuple", "type", "zip",
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException",
    "BufferError", "BytesWarning", "DeprecationWarning", "EOFError",
    "Ellipsis", "EnvironmentError", "Exception", "FloatingPointError",
    "GeneratorExit", "IOError", "ImportError", "ImportWarning",
    "IndentationError", "IndexError", "KeyError", "KeyboardInterrupt",
    "LookupError", "MemoryError", "ModuleNotFoundError", "NameError",
    "NotImplemented", "NotImplementedError", "OSError", "OverflowError",
    "PermissionError", "RecursionError", "ReferenceError", "RuntimeError",
    "RuntimeWarning", "StopAsyncIteration", "StopIteration", "SyntaxError",
    "SyntaxWarning", "SystemError", "TabError", "TimeoutError", "TypeError",
    "UnboundLocalError", "UnicodeDecodeError", "UnicodeEncodeError",
    "UnicodeError", "UnicodeTranslateError", "UnicodeWarning", "UserWarning",
    "ValueError", "Warning", "ZeroDivisionError",
)


class WallTimeout(BaseException):
    """Raised by the SIGALRM handler; BaseException so user code cannot
    swallow it with a bare ``except Exception``."""


def _alarm_handler(signum, frame):
    raise WallTimeout()


def install_alarm_handler() -> None:
    signal.signal(signal.SIGALRM, _alarm_handler)


def make_import_gate(allowed: frozenset[str]) -> Callable:
    real_import = _builtins.__import__

    def gate(name, globals=None, locals=None, fromlist=(), level=0):
        if level:
            raise ImportError("relative imports are not allowed")
        root = name.split(".", 1)[0]
        if root not in allowed:
            raise ImportError(f"import of {name!r} is not allowed")
        return real_import(name, globals, locals, fromlist, level)

    return gate


def make_guarded_open(scratch_dir: str) -> Callable:
    real_open = _builtins.open
    root = os.path.realpath(scratch_dir)

    def guarded_open(file, *args, **kwargs):
        if isinstance(file, int):
            raise PermissionError("opening file descriptors is not allowed")
        path = os.fspath(file)
        if isinstance(path, bytes):
            path = path.decode(sys.getfilesystemencoding(), errors="surrogateescape")
        if not os.path.isabs(path):
            path = os.path.join(os.getcwd(), path)
        resolved = os.path.realpath(path)
        if resolved != root and not resolved.startswith(root + os.sep):
            raise PermissionError(f"file access outside the scratch directory: {file!r}")
        return real_open(file, *args, **kwargs)

    return guarded_open


@dataclass
class WorkerEnv:
    scratch_dir: str
    allowed_modules: frozenset[str] = DEFAULT_ALLOWED_MODULES
    restricted_builtins: dict[str, Any] = field(default_factory=dict)
    sink: Any = None

    def __post_init__(self) -> None:
        table = {}
        for name in SAFE_BUILTIN_NAMES:
            if hasattr(_builtins, name):
                table[name] = getattr(_builtins, name)
        table["__import__"] = make_import_gate(self.allowed_modules)
        table["open"] = make_guarded_open(self.scratch_dir)
        table["__build_class__"] = _builtins.__build_class__
        table["__name__"] = "sandbox"
        self.restricted_builtins = table
        # Executed code's prints land here, never on the protocol pipe.
        self.sink = open(os.devnull, "w", encoding="utf-8")


def apply_startup_rlimits(cpu_seconds: int, address_space_bytes: int) -> None:
    try:
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds))
    except (ValueError, OSError):
        pass
    try:
        resource.setrlimit(resource.RLIMIT_AS, (address_space_bytes, address_space_bytes))
    except (ValueError, OSError):
        pass


def run_function_on_input(source: str, fn_name: str, bindings_surface: str,
                          limits: dict, env: WorkerEnv) -> dict:
    """Define the function, call it by keyword expansion, canonicalize.

    Returns the response fields (everything but the id). Failures map to
    statuses: user exceptions to EXCEPTION, the wall timer to TIMEOUT,
    MemoryError to OOM. Never raises.
    """
    wall_ms = int(limits.get("wall_time_ms", 2000))
    memory_bytes = int(limits.get("memory_bytes", 256 * 2**20))
    output_chars = int(limits.get("output_chars", 2048))

    try:
        bindings = parse_binding_surface(bindings_surface)
    except SurfaceParseError as exc:
        return _failure("EXCEPTION", "SurfaceParseError", str(exc), 0.0)

    _, hard_as = resource.getrlimit(resource.RLIMIT_AS)
    soft_target = memory_bytes if hard_as == resource.RLIM_INFINITY else min(memory_bytes, hard_as)

    ns = {"__builtins__": env.restricted_builtins}
    t0 = time.perf_counter()
    status, output, exc_info = "OK", None, None
    try:
        try:
            resource.setrlimit(resource.RLIMIT_AS, (soft_target, hard_as))
        except (ValueError, OSError):
            pass
        signal.setitimer(signal.ITIMER_REAL, wall_ms / 1000.0)
        with contextlib.redirect_stdout(env.sink), contextlib.redirect_stderr(env.sink):
            exec(source, ns)  # noqa: S102 - this is the worker's whole job
            fn = ns.get(fn_name)
            if fn is None or not callable(fn):
                raise NameError(f"source does not define a callable {fn_name!r}")
            result = fn(**bindings)
            output = canonical_text(result)
    except WallTimeout:
        status = "TIMEOUT"
    except MemoryError:
        status = "OOM"
    except CanonicalizationError as exc:
        status, exc_info = "EXCEPTION", ("CanonicalizationError", str(exc))
    except SystemExit as exc:
        status, exc_info = "EXCEPTION", ("SystemExit", str(exc.code))
    except BaseException as exc:  # noqa: BLE001 - anything user code throws
        status, exc_info = "EXCEPTION", (type(exc).__name__, str(exc))
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        try:
            resource.setrlimit(resource.RLIMIT_AS, (hard_as, hard_as))
        except (ValueError, OSError):
            pass
    duration_ms = (time.perf_counter() - t0) * 1000.0

    if status != "OK":
        type_name, message = exc_info if exc_info else (None, None)
        return _failure(status, type_name, message, duration_ms, output_chars)
    if output is not None and len(output) > output_chars:
        output = output[:output_chars]
    return {"status": "OK", "output": output, "exception": None,
            "duration_ms": round(duration_ms, 3)}


def _failure(status: str, type_name: str | None, message: str | None,
             duration_ms: float, output_chars: int = 2048) -> dict:
    exception = None
    if status == "EXCEPTION":
        exception = {
            "type_name": type_name or "Exception",
            "message": (message or "")[:output_chars],
        }
    return {"status": status, "output": None, "exception": exception,
            "duration_ms": round(duration_ms, 3)}

"""Shared test utilities: trusted in-process execution and corpus synthesis."""

from __future__ import annotations

import time

from casegen import values
from casegen.corpus import FunctionRecord, SourceDocument, extract_functions
from casegen.execution import CaseOutcome, ExecRequest, Limits, Status
from casegen.inputgen import InputCase


class LocalExecutor:
    """Run trusted fixture code in-process.

    Only for test fixtures we wrote ourselves; the pipeline proper never
    executes code in the orchestrator. Serves as the independent oracle
    when checking judging and canonicalization behavior.
    """

    def submit(self, req: ExecRequest) -> CaseOutcome:
        ns: dict = {}
        t0 = time.perf_counter()
        try:
            exec(req.source, ns)  # noqa: S102 - trusted fixture code
            fn = ns[req.fn_name]
            bindings = values.parse_binding_surface(req.case.surface, depth_cap=64)
            result = fn(**bindings)
            text = values.canonical_text(result)
        except values.CanonicalizationError as exc:
            return CaseOutcome(
                case=req.case, status=Status.EXCEPTION,
                exception={"type_name": "CanonicalizationError", "message": str(exc)},
                duration_ms=(time.perf_counter() - t0) * 1000,
            )
        except BaseException as exc:  # noqa: BLE001 - mirrors sandbox behavior
            return CaseOutcome(
                case=req.case, status=Status.EXCEPTION,
                exception={"type_name": type(exc).__name__, "message": str(exc)},
                duration_ms=(time.perf_counter() - t0) * 1000,
            )
        if len(text) > req.limits.output_chars:
            text = text[: req.limits.output_chars]
        return CaseOutcome(
            case=req.case, status=Status.OK, output_canonical=text,
            duration_ms=(time.perf_counter() - t0) * 1000,
        )


def record_from_source(source: str, path: str = "fixture.py") -> FunctionRecord:
    doc = SourceDocument.from_text(path, source)
    records = extract_functions(doc)
    assert len(records) == 1, f"expected one function in fixture, got {len(records)}"
    return records[0]


def case_from_texts(fn_id: str, arg_texts: dict[str, str], origin: str = "LLM") -> InputCase:
    return InputCase.from_arg_texts(fn_id, arg_texts, origin=origin)


def run_cases(rec: FunctionRecord, cases: list[InputCase],
              limits: Limits | None = None) -> list[CaseOutcome]:
    ex = LocalExecutor()
    limits = limits or Limits()
    out = []
    for case in cases:
        req = ExecRequest(fn_id=rec.fn_id, source=rec.source, fn_name=rec.name,
                          case=case, limits=limits)
        out.append(ex.submit(req))
    return out


def synth_function_source(i: int) -> str:
    """Deterministic family of small pure two-argument functions."""
    a = (i % 7) + 2
    b = (i % 5) + 1
    variant = i % 4
    name = f"combine_{i:04d}"
    if variant == 0:
        body = f"    return x * {a} + y + {b}"
    elif variant == 1:
        body = f"    return (x + y) * {a} - {b}, x - y"
    elif variant == 2:
        body = f"    total = x * {a}\n    for _ in range({b}):\n        total += y\n    return total"
    else:
        body = f"    if x > y:\n        return x * {a} - y\n    return y * {b} + x + {a}"
    return f"def {name}(x, y):\n{body}\n"


def write_synth_corpus(root, n: int, per_file: int = 20) -> None:
    """Write n synthetic functions as .py files under root."""
    root.mkdir(parents=True, exist_ok=True)
    for start in range(0, n, per_file):
        chunk = [synth_function_source(i) for i in range(start, min(start + per_file, n))]
        (root / f"mod_{start:05d}.py").write_text("\n\n".join(chunk), encoding="utf-8")

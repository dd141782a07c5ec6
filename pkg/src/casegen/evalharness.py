"""Score candidate reconstructions against held-out cases.

A candidate passes when it reproduces the recorded canonical output on
every judge case (observed plus held-out, OK-status only). Matching is
exact string equality of canonical forms, except that float leaves
compare within a relative tolerance so representation noise does not
fail correct re-implementations.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import values
from .dataset import PromptTemplate, TrainingSample, scan_cases, target_signature
from .execution import CaseOutcome, ExecRequest, Executor, Limits, Status
from .inputgen import InputCase

FLOAT_REL_TOL = 1e-6

# Zero-shot wrapper appended to a sample's case prompt; {prompt} and
# {func_name} are filled per task.
ZERO_SHOT_TEMPLATE = """\
{prompt}

Please write the correct names of arguments. As the function you implement will be called by: {func_name}(**input_dict). Keep the original type. No need to convert the output to string.
"""

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


@dataclass
class EvalTask:
    sample_id: str
    prompt: str
    fn_name: str
    judge_cases: list[CaseOutcome]
    fn_id: str = ""


@dataclass
class EvalVerdict:
    sample_id: str
    extracted: str | None
    per_case: list[dict] = field(default_factory=list)  # {"case_id", "match", "got"}
    passed: bool = False
    failure_kind: str | None = None  # NO_PROGRAM | DEFINE_ERROR | MISMATCH | RUNTIME_ERROR

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "extracted": self.extracted,
            "per_case": self.per_case,
            "pass": self.passed,
            "failure_kind": self.failure_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalVerdict":
        return cls(
            sample_id=obj["sample_id"],
            extracted=obj.get("extracted"),
            per_case=list(obj.get("per_case", [])),
            passed=obj["pass"],
            failure_kind=obj.get("failure_kind"),
        )


def render_eval_prompt(sample: TrainingSample, templates: Mapping[str, PromptTemplate]) -> EvalTask:
    """Wrap an EVAL sample's prompt in the zero-shot instruction.

    Judge cases are the OK observed cases recovered from the prompt via
    the sample's template, plus the OK held-out cases.
    """
    if sample.split != "EVAL":
        raise ValueError("eval tasks are built from EVAL samples only")
    tpl = templates[sample.template_id]
    fn_name, arg_names = target_signature(sample.target)

    judge: list[CaseOutcome] = []
    seen: set[str] = set()
    for scanned in scan_cases(sample.prompt, tpl, arg_names):
        if not scanned.is_ok:
            continue
        case = InputCase.from_arg_texts(
            sample.fn_id, values.binding_arg_texts(scanned.surface), origin="LLM", depth_cap=64,
        )
        if case.case_id in seen:
            continue
        seen.add(case.case_id)
        judge.append(CaseOutcome(case=case, status=Status.OK, output_canonical=scanned.output))
    for outcome in sample.holdout_cases:
        if outcome.status == Status.OK and outcome.case.case_id not in seen:
            seen.add(outcome.case.case_id)
            judge.append(outcome)

    prompt = ZERO_SHOT_TEMPLATE.replace("{prompt}", sample.prompt).replace("{func_name}", fn_name)
    return EvalTask(
        sample_id=sample.sample_id,
        prompt=prompt,
        fn_name=fn_name,
        judge_cases=judge,
        fn_id=sample.fn_id,
    )


def extract_program(completion: str, fn_name: str) -> str | None:
    """Pull a candidate definition of ``fn_name`` out of a completion.

    Prefers the last fenced code block defining the function; falls back
    to scanning for a bare definition. None means no program was found.
    """
    needle = re.compile(rf"\bdef\s+{re.escape(fn_name)}\s*\(")
    blocks = [m.group(1) for m in _FENCE_RE.finditer(completion)]
    for block in reversed(blocks):
        if needle.search(block):
            return block.strip("\n")

    if not needle.search(completion):
        return None
    try:
        tree = ast.parse(completion)
    except SyntaxError:
        return _extract_bare(completion, needle)
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == fn_name:
            return ast.get_source_segment(completion, node)
    return _extract_bare(completion, needle)


def _extract_bare(completion: str, needle: re.Pattern[str]) -> str | None:
    m = needle.search(completion)
    if not m:
        return None
    lines = completion[m.start():].splitlines()
    while lines:
        candidate = "\n".join(lines)
        try:
            ast.parse(candidate)
            return candidate
        except SyntaxError:
            lines.pop()
    return None


def judge_candidate(
    task: EvalTask,
    candidate: str | None,
    ex: Executor,
    limits: Limits | None = None,
    rel_tol: float = FLOAT_REL_TOL,
) -> EvalVerdict:
    """Execute a candidate on every judge case and compare canonical outputs."""
    if candidate is None:
        return EvalVerdict(task.sample_id, extracted=None, passed=False, failure_kind="NO_PROGRAM")
    try:
        tree = ast.parse(candidate)
    except SyntaxError:
        return EvalVerdict(task.sample_id, extracted=candidate, passed=False, failure_kind="DEFINE_ERROR")
    defines = any(
        isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)) and n.name == task.fn_name
        for n in ast.walk(tree)
    )
    if not defines:
        return EvalVerdict(task.sample_id, extracted=candidate, passed=False, failure_kind="DEFINE_ERROR")

    limits = limits or Limits()
    per_case: list[dict] = []
    saw_mismatch = False
    saw_runtime = False
    for expected in task.judge_cases:
        req = ExecRequest(
            fn_id=task.fn_id or task.sample_id,
            source=candidate,
            fn_name=task.fn_name,
            case=expected.case,
            limits=limits,
        )
        try:
            got = ex.submit(req)
        except Exception:
            got = CaseOutcome(case=expected.case, status=Status.CRASH)
        if got.status == Status.OK:
            match = values.canonical_texts_match(
                got.output_canonical or "", expected.output_canonical or "", rel_tol,
            )
            got_text = got.output_canonical
            saw_mismatch |= not match
        else:
            match = False
            got_text = got.status.value
            saw_runtime = True
        per_case.append({"case_id": expected.case.case_id, "match": match, "got": got_text})

    passed = bool(per_case) and all(c["match"] for c in per_case)
    failure = None
    if not passed:
        failure = "MISMATCH" if saw_mismatch else ("RUNTIME_ERROR" if saw_runtime else "MISMATCH")
    return EvalVerdict(task.sample_id, extracted=candidate, per_case=per_case,
                       passed=passed, failure_kind=failure)


def score_run(
    verdicts: Iterable[EvalVerdict],
    template_by_sample: Mapping[str, str] | None = None,
) -> dict:
    """Aggregate verdicts into accuracy, failure histogram, and per-template rates."""
    verdicts = sorted(verdicts, key=lambda v: v.sample_id)
    total = len(verdicts)
    passes = sum(1 for v in verdicts if v.passed)
    histogram: dict[str, int] = {}
    for v in verdicts:
        if not v.passed and v.failure_kind:
            histogram[v.failure_kind] = histogram.get(v.failure_kind, 0) + 1

    per_template: dict[str, dict] = {}
    if template_by_sample:
        for v in verdicts:
            tpl = template_by_sample.get(v.sample_id)
            if tpl is None:
                continue
            slot = per_template.setdefault(tpl, {"total": 0, "passes": 0})
            slot["total"] += 1
            slot["passes"] += int(v.passed)
        for slot in per_template.values():
            slot["accuracy"] = round(slot["passes"] / slot["total"], 4) if slot["total"] else None

    return {
        "total": total,
        "passes": passes,
        "accuracy": round(passes / total, 4) if total else None,
        "failure_kinds": dict(sorted(histogram.items())),
        "per_template": dict(sorted(per_template.items())),
    }


def format_report(report: dict) -> str:
    """Human-readable table for a score report."""
    acc = report["accuracy"]
    lines = [
        f"samples : {report['total']}",
        f"passes  : {report['passes']}",
        f"accuracy: {acc if acc is not None else 'n/a'}",
    ]
    if report["failure_kinds"]:
        lines.append("failures:")
        for kind, count in report["failure_kinds"].items():
            lines.append(f"  {kind:<14} {count}")
    if report["per_template"]:
        lines.append("per-template accuracy:")
        for tpl, slot in report["per_template"].items():
            lines.append(f"  {tpl:<20} {slot['passes']}/{slot['total']} ({slot['accuracy']})")
    return "\n".join(lines)

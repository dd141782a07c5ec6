"""Turn validated (function, outcome set) pairs into rendered samples.

Each function gets one template (drawn seeded-uniformly), an observed
subset of its cases in the prompt, and the remaining cases held out for
judging. Rendering is reversible: the case-line scanner recovers every
observed (input surface, output) pair from a rendered prompt.
"""

from __future__ import annotations

import ast
import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from math import ceil
from pathlib import Path
from typing import Callable, Iterable

from . import values
from .corpus import FunctionRecord
from .execution import CaseOutcome, FunctionCaseSet, Status, Verdict
from .inputgen import InputCase

INPUT_STYLES = ("kwargs", "positional", "name_colon")

_RAISES_RE = re.compile(r"^raises (\w+)\((.*)\)$")


class TemplateError(ValueError):
    """A template file fails structural validation at load time."""


@dataclass(frozen=True)
class PromptTemplate:
    """One rendering style for observed cases plus instructions."""

    template_id: str
    input_style: str
    case_line_format: str
    body: str
    target_format: str
    style_tags: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.input_style not in INPUT_STYLES:
            raise TemplateError(f"{self.template_id}: unknown input style {self.input_style!r}")
        if "{func_name}" not in self.body:
            raise TemplateError(f"{self.template_id}: body lacks {{func_name}} placeholder")
        if "{cases}" not in self.body:
            raise TemplateError(f"{self.template_id}: body lacks {{cases}} placeholder")
        if "{code}" not in self.target_format:
            raise TemplateError(f"{self.template_id}: target_format lacks {{code}} placeholder")
        ipos = self.case_line_format.find("{input}")
        opos = self.case_line_format.find("{output}")
        if ipos < 0 or opos < 0 or ipos > opos:
            raise TemplateError(f"{self.template_id}: case line must place {{input}} before {{output}}")
        sep = self.case_line_format[ipos + len("{input}"):opos]
        if not sep.strip(" "):
            raise TemplateError(f"{self.template_id}: no literal separator between input and output")

    def line_regex(self) -> re.Pattern[str]:
        pattern = re.escape(self.case_line_format)
        pattern = pattern.replace(re.escape("{input}"), "(?P<input>.+)")
        pattern = pattern.replace(re.escape("{output}"), "(?P<output>.+)")
        return re.compile("^" + pattern + "$")

    @classmethod
    def from_json(cls, obj: dict) -> "PromptTemplate":
        tpl = cls(
            template_id=obj["template_id"],
            input_style=obj["input_style"],
            case_line_format=obj["case_line_format"],
            body=obj["body"],
            target_format=obj["target_format"],
            style_tags=tuple(obj.get("style_tags", ())),
        )
        tpl.validate()
        return tpl


def load_templates(template_dir: str | Path | None = None) -> list[PromptTemplate]:
    """Load and validate templates; default to the packaged set."""
    if template_dir is None:
        pkg = resources.files(__package__) / "templates"
        paths = sorted(pkg.iterdir(), key=lambda p: p.name)
        texts = [p.read_text(encoding="utf-8") for p in paths if p.name.endswith(".json")]
    else:
        paths = sorted(Path(template_dir).glob("*.json"))
        if not paths:
            raise TemplateError(f"no template files under {template_dir}")
        texts = [p.read_text(encoding="utf-8") for p in paths]
    templates = [PromptTemplate.from_json(json.loads(t)) for t in texts]
    ids = [t.template_id for t in templates]
    if len(set(ids)) != len(ids):
        raise TemplateError("duplicate template_id in template set")
    return templates


# ---------------------------------------------------------------------------
# Observed-set sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MPolicy:
    """How many cases go into the prompt: uniform on [max(min_m, ceil(n/2)), n]."""

    min_m: int = 3
    fixed_m: int | None = None

    def draw_m(self, n: int, rng: random.Random) -> int:
        if self.fixed_m is not None:
            return min(self.fixed_m, n)
        lo = min(max(self.min_m, ceil(n / 2)), n)
        return rng.randint(lo, n)


MIN_TOTAL_CASES = 3
_RESAMPLE_TRIES = 20


def sample_observed_set(
    caseset: FunctionCaseSet,
    seed: int,
    policy: MPolicy = MPolicy(),
) -> tuple[list[CaseOutcome], list[CaseOutcome]] | None:
    """Split a VALID case set into (observed, holdout), both in case order.

    The observed set must contain at least two OK cases; after a bounded
    number of redraws the holdout is shrunk to enforce it. Returns None
    (caller counts a skip) when fewer than three usable cases exist.
    """
    if caseset.verdict != Verdict.VALID:
        raise ValueError("observed sets are only drawn from VALID case sets")
    usable = [o for o in caseset.outcomes if o.status in (Status.OK, Status.EXCEPTION)]
    n = len(usable)
    if n < MIN_TOTAL_CASES:
        return None

    rng = random.Random(f"{seed}:{caseset.fn_id}:observe")
    m = policy.draw_m(n, rng)

    chosen: list[int] = []
    for _ in range(_RESAMPLE_TRIES):
        chosen = sorted(rng.sample(range(n), m))
        if sum(1 for i in chosen if usable[i].status == Status.OK) >= 2:
            break
    else:
        picked = set(chosen)
        for i, outcome in enumerate(usable):
            if sum(1 for j in picked if usable[j].status == Status.OK) >= 2:
                break
            if outcome.status == Status.OK and i not in picked:
                picked.add(i)
        chosen = sorted(picked)

    chosen_set = set(chosen)
    observed = [usable[i] for i in chosen]
    holdout = [usable[i] for i in range(n) if i not in chosen_set]
    return observed, holdout


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

@dataclass
class TrainingSample:
    """A rendered sample: observed cases in the prompt, source as target."""

    sample_id: str
    fn_id: str
    template_id: str
    m: int
    prompt: str
    target: str
    holdout_cases: list[CaseOutcome]
    split: str  # "TRAIN" | "EVAL"

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "fn_id": self.fn_id,
            "template_id": self.template_id,
            "m": self.m,
            "prompt": self.prompt,
            "target": self.target,
            "holdout_cases": [_normalized_outcome(o) for o in self.holdout_cases],
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingSample":
        return cls(
            sample_id=obj["sample_id"],
            fn_id=obj["fn_id"],
            template_id=obj["template_id"],
            m=obj["m"],
            prompt=obj["prompt"],
            target=obj["target"],
            holdout_cases=[CaseOutcome.from_json(o) for o in obj["holdout_cases"]],
            split=obj["split"],
        )


def _normalized_outcome(o: CaseOutcome) -> dict:
    # Durations are run noise, not data; zero them so dataset files are
    # byte-stable across reruns.
    obj = o.to_json()
    obj["duration_ms"] = 0.0
    return obj


def format_input(case: InputCase, style: str, arg_names: list[str]) -> str:
    texts = case.arg_texts()
    ordered = [(name, texts[name]) for name in arg_names if name in texts]
    ordered += [(name, text) for name, text in texts.items() if name not in arg_names]
    if style == "kwargs":
        return values.render_binding_surface(dict(ordered))
    if style == "positional":
        return ", ".join(text for _, text in ordered)
    if style == "name_colon":
        return ", ".join(f"{name}:{text}" for name, text in ordered)
    raise ValueError(f"unknown input style {style}")


def format_output(outcome: CaseOutcome) -> str:
    if outcome.status == Status.OK:
        return json.dumps(outcome.output_canonical, ensure_ascii=False)
    if outcome.status == Status.EXCEPTION and outcome.exception:
        type_name = outcome.exception.get("type_name", "Exception")
        message = outcome.exception.get("message", "")
        return f"raises {type_name}({json.dumps(message, ensure_ascii=False)})"
    return f"raises RuntimeError({json.dumps(outcome.status.value)})"


def render_case_line(outcome: CaseOutcome, tpl: PromptTemplate, arg_names: list[str]) -> str:
    line = tpl.case_line_format.replace("{input}", format_input(outcome.case, tpl.input_style, arg_names))
    return line.replace("{output}", format_output(outcome))


def render_sample(
    rec: FunctionRecord,
    observed: list[CaseOutcome],
    tpl: PromptTemplate,
    holdout: list[CaseOutcome] | None = None,
    split: str = "TRAIN",
) -> TrainingSample:
    """Render one sample from observed cases; holdout rides along unrendered."""
    if not observed:
        raise ValueError("observed set must be non-empty")
    cases_text = "\n".join(render_case_line(o, tpl, rec.arg_names) for o in observed)
    prompt = tpl.body.replace("{cases}", cases_text).replace("{func_name}", rec.name)
    target = tpl.target_format.replace("{code}", rec.source.rstrip("\n"))
    sample_id = hashlib.sha256(
        f"{rec.fn_id}:{tpl.template_id}:{','.join(o.case.case_id for o in observed)}".encode("utf-8")
    ).hexdigest()[:16]
    return TrainingSample(
        sample_id=sample_id,
        fn_id=rec.fn_id,
        template_id=tpl.template_id,
        m=len(observed),
        prompt=prompt,
        target=target,
        holdout_cases=list(holdout or []),
        split=split,
    )


# ---------------------------------------------------------------------------
# Prompt scanning (round trip)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScannedCase:
    """One case recovered from a rendered prompt line."""

    surface: str
    output: str | None           # canonical text for OK cases
    exception: dict | None = None

    @property
    def is_ok(self) -> bool:
        return self.output is not None


def _split_top_level(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    in_str: str | None = None
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 2
                continue
            if ch == in_str:
                in_str = None
        elif ch in "'\"":
            in_str = ch
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
        i += 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def _parse_input_text(text: str, style: str, arg_names: list[str]) -> str:
    """Normalize a rendered input back to its dict(...) surface form."""
    if style == "kwargs":
        arg_texts = values.binding_arg_texts(text)
        return values.render_binding_surface(arg_texts)
    if style == "positional":
        parts = _split_top_level(text)
        if len(parts) > len(arg_names):
            raise values.SurfaceParseError("more positional values than argument names")
        return values.render_binding_surface(dict(zip(arg_names, parts)))
    if style == "name_colon":
        arg_texts = {}
        for part in _split_top_level(text):
            name, sep, value = part.partition(":")
            if not sep or not name.strip().isidentifier():
                raise values.SurfaceParseError(f"bad name:value part {part!r}")
            arg_texts[name.strip()] = value.strip()
        return values.render_binding_surface(arg_texts)
    raise ValueError(f"unknown input style {style}")


def scan_cases(prompt: str, tpl: PromptTemplate, arg_names: list[str]) -> list[ScannedCase]:
    """Recover the observed cases from a rendered prompt."""
    fmt = tpl.case_line_format
    ipos = fmt.find("{input}")
    opos = fmt.find("{output}")
    prefix = fmt[:ipos]
    sep = fmt[ipos + len("{input}"):opos]
    suffix = fmt[opos + len("{output}"):]

    out: list[ScannedCase] = []
    for line in prompt.splitlines():
        scanned = _parse_case_line(line, prefix, sep, suffix, tpl.input_style, arg_names)
        if scanned is not None:
            out.append(scanned)
    return out


def _parse_case_line(line: str, prefix: str, sep: str, suffix: str,
                     style: str, arg_names: list[str]) -> ScannedCase | None:
    if not line.startswith(prefix) or not line.endswith(suffix) or sep not in line:
        return None
    core = line[len(prefix):len(line) - len(suffix)] if suffix else line[len(prefix):]
    # The separator may also occur inside a rendered string; try split
    # points right to left until both halves parse.
    idx = core.rfind(sep)
    while idx != -1:
        input_text, output_text = core[:idx], core[idx + len(sep):]
        try:
            surface = _parse_input_text(input_text, style, arg_names)
            return _scanned_output(surface, output_text)
        except (values.SurfaceParseError, json.JSONDecodeError, ValueError):
            idx = core.rfind(sep, 0, idx)
    return None


def _scanned_output(surface: str, output_text: str) -> ScannedCase:
    raised = _RAISES_RE.match(output_text)
    if raised:
        message = json.loads(raised.group(2)) if raised.group(2) else ""
        return ScannedCase(surface=surface, output=None,
                           exception={"type_name": raised.group(1), "message": message})
    output = json.loads(output_text)
    if not isinstance(output, str):
        raise ValueError("case outputs are JSON-quoted canonical text")
    return ScannedCase(surface=surface, output=output)


def extract_target_source(target: str) -> str:
    """Pull the function source back out of a framed target text."""
    m = re.search(r"```[a-zA-Z0-9_+-]*\n(.*?)```", target, re.DOTALL)
    return m.group(1).strip("\n") if m else target


def target_signature(target: str) -> tuple[str, list[str]]:
    """(function name, argument names) parsed from a sample target."""
    source = extract_target_source(target)
    fn = ast.parse(source).body[0]
    if not isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef)):
        raise ValueError("target does not frame a single function definition")
    args = fn.args
    return fn.name, [a.arg for a in args.posonlyargs + args.args + args.kwonlyargs]


# ---------------------------------------------------------------------------
# Dataset build
# ---------------------------------------------------------------------------

@dataclass
class BuildStats:
    pairs_in: int = 0
    skipped_small: int = 0
    samples: int = 0
    train: int = 0
    eval: int = 0
    template_histogram: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "pairs_in": self.pairs_in,
            "skipped_small": self.skipped_small,
            "samples": self.samples,
            "train": self.train,
            "eval": self.eval,
            "template_histogram": dict(sorted(self.template_histogram.items())),
        }


ExtraInputsProvider = Callable[[FunctionRecord], list[CaseOutcome]]


def build_samples(
    pairs: Iterable[tuple[FunctionRecord, FunctionCaseSet]],
    templates: list[PromptTemplate],
    seed: int,
    holdout_count: int,
    m_policy: MPolicy = MPolicy(),
    extra_inputs_provider: ExtraInputsProvider | None = None,
) -> tuple[list[TrainingSample], BuildStats]:
    """Render one sample per VALID pair and assign train/eval splits.

    EVAL functions may receive extra judge cases from the optional
    provider (a second input-generation + execution pass); those merge
    into holdout_cases.
    """
    pairs = list(pairs)
    if not all(cs.verdict == Verdict.VALID for _, cs in pairs):
        raise ValueError("build_samples expects VALID pairs only")
    stats = BuildStats(pairs_in=len(pairs))

    if holdout_count > 0 and holdout_count >= len(pairs):
        raise ValueError("holdout_count must be smaller than the number of pairs")

    fn_ids = sorted({rec.fn_id for rec, _ in pairs})
    eval_ids = set(random.Random(f"{seed}:split").sample(fn_ids, holdout_count)) if holdout_count else set()

    samples: list[TrainingSample] = []
    for rec, caseset in pairs:
        drawn = sample_observed_set(caseset, seed, m_policy)
        if drawn is None:
            stats.skipped_small += 1
            continue
        observed, holdout = drawn
        rng = random.Random(f"{seed}:tpl:{rec.fn_id}")
        tpl = templates[rng.randrange(len(templates))]
        split = "EVAL" if rec.fn_id in eval_ids else "TRAIN"
        if split == "EVAL" and extra_inputs_provider is not None:
            holdout = holdout + extra_inputs_provider(rec)
        sample = render_sample(rec, observed, tpl, holdout=holdout, split=split)
        samples.append(sample)
        stats.template_histogram[tpl.template_id] = stats.template_histogram.get(tpl.template_id, 0) + 1

    samples.sort(key=lambda s: s.sample_id)
    stats.samples = len(samples)
    stats.train = sum(1 for s in samples if s.split == "TRAIN")
    stats.eval = sum(1 for s in samples if s.split == "EVAL")
    return samples, stats


def build_dataset(
    pairs: Iterable[tuple[FunctionRecord, FunctionCaseSet]],
    templates: list[PromptTemplate],
    seed: int,
    holdout_count: int,
    out_dir: str | Path,
    m_policy: MPolicy = MPolicy(),
    extra_inputs_provider: ExtraInputsProvider | None = None,
    config_hash: str = "",
) -> BuildStats:
    """Write train.jsonl / eval.jsonl / manifest.json under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples, stats = build_samples(pairs, templates, seed, holdout_count, m_policy, extra_inputs_provider)

    train_path = out_dir / "train.jsonl"
    eval_path = out_dir / "eval.jsonl"
    with train_path.open("w", encoding="utf-8") as ftrain, eval_path.open("w", encoding="utf-8") as feval:
        for sample in samples:
            line = json.dumps(sample.to_json(), ensure_ascii=False, sort_keys=True) + "\n"
            (feval if sample.split == "EVAL" else ftrain).write(line)

    manifest = {
        "counts": stats.as_dict(),
        "seed": seed,
        "config_hash": config_hash,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return stats

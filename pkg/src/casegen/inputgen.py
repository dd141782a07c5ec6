"""Produce candidate argument bindings for mined functions.

Two generators share one output type: an LLM writer reached over an HTTP
text-completion endpoint (responses replay-cached for offline reruns),
and a deterministic type-inference fallback that needs no model at all.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
import random
import re
import string as string_mod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

from . import values
from .corpus import FunctionRecord

log = logging.getLogger(__name__)

DEFAULT_EXAMPLES_REQUESTED = 10

# Writer prompt with a one-shot demonstration; {count} is the number of
# inputs requested and {code} the function under test.
GENERATOR_PROMPT = """\
Given the function, first analyze the types of the function arguments, then write {count} different example inputs for the function, each example should be a dict with function arguments' names and their values.
Output format:
```python
examples = [
    dict(argname=argvalue),
    ....
]
```

Function:
```python
def test_func(a: int, b: str) -> str:
    return str(a) + b
```
Examples:
```python
examples = [
    dict(a=1, b='a'),
    dict(a=2, b='b'),
    dict(a=3, b='c'),
    dict(a=4, b='d'),
    dict(a=5, b='e'),
    dict(a=6, b='f'),
    dict(a=7, b='g'),
    dict(a=8, b='h'),
    dict(a=9, b='i'),
    dict(a=10, b='j'),
]
```

Function:
```python
{code}
```
Examples:
"""

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class WriterConfig:
    """Endpoint and sampling settings for the input writer."""

    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.2
    top_p: float = 0.95
    max_retries: int = 2
    examples_requested: int = DEFAULT_EXAMPLES_REQUESTED
    max_tokens: int = 1024
    depth_cap: int = values.DEFAULT_DEPTH_CAP

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.examples_requested < 1:
            raise ValueError("examples_requested must be >= 1")

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "endpoint_url": self.endpoint_url,
                "model_name": self.model_name,
                "temperature": self.temperature,
                "top_p": self.top_p,
                "examples_requested": self.examples_requested,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass
class InputCase:
    """One candidate argument binding plus its literal surface form."""

    case_id: str
    bindings: dict[str, Any]
    surface: str
    origin: str  # "LLM" | "FALLBACK"

    @classmethod
    def from_arg_texts(cls, fn_id: str, arg_texts: dict[str, str], origin: str,
                       depth_cap: int = values.DEFAULT_DEPTH_CAP) -> "InputCase":
        surface = values.render_binding_surface(arg_texts)
        bindings = values.parse_binding_surface(surface, depth_cap)
        canon = values.canonical_text(bindings)
        case_id = hashlib.sha256(f"{fn_id}:{canon}".encode("utf-8")).hexdigest()[:16]
        return cls(case_id=case_id, bindings=bindings, surface=surface, origin=origin)

    def arg_texts(self) -> dict[str, str]:
        return values.binding_arg_texts(self.surface)

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "bindings": self.arg_texts(),
            "surface": self.surface,
            "origin": self.origin,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InputCase":
        return cls(
            case_id=obj["case_id"],
            bindings=values.parse_binding_surface(obj["surface"], depth_cap=64),
            surface=obj["surface"],
            origin=obj["origin"],
        )


@dataclass
class ParseStats:
    responses: int = 0
    no_block: int = 0
    dropped_entries: int = 0


class TransportError(Exception):
    """The completion endpoint could not produce a response."""


class CompletionTransport(Protocol):
    def complete(self, prompt: str, cfg: WriterConfig) -> str: ...


class HttpCompletionClient:
    """Single-turn prompt -> completion over a JSON HTTP endpoint.

    Request body: {"model", "prompt", "temperature", "top_p", "max_tokens"}.
    The response may carry the text under "completion", "text", or an
    OpenAI-style choices[0].text.
    """

    def __init__(self, auth_token: str | None = None, timeout_s: float = 120.0):
        self.auth_token = auth_token
        self.timeout_s = timeout_s

    def complete(self, prompt: str, cfg: WriterConfig) -> str:
        import requests

        if not cfg.endpoint_url:
            raise TransportError("no endpoint_url configured")
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        body = {
            "model": cfg.model_name,
            "prompt": prompt,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }
        try:
            resp = requests.post(cfg.endpoint_url, json=body, headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise TransportError(str(exc)) from exc
        for key in ("completion", "text"):
            if isinstance(payload.get(key), str):
                return payload[key]
        choices = payload.get("choices")
        if isinstance(choices, list) and choices and isinstance(choices[0].get("text"), str):
            return choices[0]["text"]
        raise TransportError("endpoint response carried no completion text")


class ReplayCache:
    """Completion store keyed by (fn_id, writer-config hash).

    A warm cache makes LLM generation a pure function of its inputs:
    reruns never touch the network.
    """

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, fn_id: str, cfg: WriterConfig) -> Path:
        return self.cache_dir / f"{fn_id}_{cfg.cache_key()}.json"

    def get(self, fn_id: str, cfg: WriterConfig) -> str | None:
        path = self._path(fn_id, cfg)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["completion"]

    def put(self, fn_id: str, cfg: WriterConfig, completion: str) -> None:
        path = self._path(fn_id, cfg)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"completion": completion}, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)


# ---------------------------------------------------------------------------
# Prompt rendering and response parsing
# ---------------------------------------------------------------------------

def render_writer_prompt(rec: FunctionRecord, cfg: WriterConfig) -> str:
    """Fill the writer prompt with the record's source."""
    if not rec.source:
        raise ValueError("record has empty source")
    return GENERATOR_PROMPT.format(count=cfg.examples_requested, code=rec.source.rstrip("\n"))


def parse_writer_response(
    text: str,
    rec: FunctionRecord,
    depth_cap: int = values.DEFAULT_DEPTH_CAP,
    stats: ParseStats | None = None,
) -> list[InputCase]:
    """Extract the ``examples`` list from a completion into input cases.

    Malformed entries, bindings naming unknown arguments, and entries
    beyond the depth cap are dropped one by one; exact-duplicate bindings
    are kept once. Returns an empty list when no examples block exists.
    """
    stats = stats if stats is not None else ParseStats()
    stats.responses += 1
    block = _first_fenced_block(text)
    if block is None:
        # Some writers skip the fence and emit the list bare.
        block = text if "examples" in text else None
    if block is None:
        stats.no_block += 1
        return []

    elements = _find_examples_elements(block)
    if elements is None:
        stats.no_block += 1
        return []

    known = set(rec.arg_names)
    out: list[InputCase] = []
    seen: set[str] = set()
    for node, node_src in elements:
        try:
            arg_texts = values.binding_arg_texts(node_src)
            case = InputCase.from_arg_texts(rec.fn_id, arg_texts, origin="LLM", depth_cap=depth_cap)
        except values.SurfaceParseError:
            stats.dropped_entries += 1
            continue
        if "\n" in case.surface:
            # Multi-line literals would break single-line case rendering.
            stats.dropped_entries += 1
            continue
        if not set(case.bindings) <= known:
            stats.dropped_entries += 1
            continue
        key = values.canonical_text(case.bindings)
        if key in seen:
            stats.dropped_entries += 1
            continue
        seen.add(key)
        out.append(case)
    return out


def _first_fenced_block(text: str) -> str | None:
    m = _FENCE_RE.search(text)
    return m.group(1) if m else None


def _find_examples_elements(block: str) -> list[tuple[ast.expr, str]] | None:
    tree = None
    try:
        tree = ast.parse(block)
    except SyntaxError:
        sub = _clip_examples_list(block)
        if sub is None:
            return None
        try:
            tree = ast.parse(sub)
            block = sub
        except SyntaxError:
            return None
    for node in ast.walk(tree):
        if isinstance(node, ast.Assign) and any(
            isinstance(t, ast.Name) and t.id == "examples" for t in node.targets
        ):
            if isinstance(node.value, (ast.List, ast.Tuple)):
                return [
                    (el, ast.get_source_segment(block, el) or "")
                    for el in node.value.elts
                ]
    return None


def _clip_examples_list(block: str) -> str | None:
    m = re.search(r"examples\s*=\s*\[", block)
    if not m:
        return None
    start = m.start()
    i = block.index("[", m.end() - 1)
    depth = 0
    in_str: str | None = None
    while i < len(block):
        ch = block[i]
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
            if depth == 0:
                return block[start:i + 1]
        i += 1
    return None


# ---------------------------------------------------------------------------
# LLM generation with replay
# ---------------------------------------------------------------------------

def generate_inputs_llm(
    rec: FunctionRecord,
    cfg: WriterConfig,
    client: CompletionTransport,
    cache: ReplayCache | None = None,
    stats: ParseStats | None = None,
) -> list[InputCase]:
    """Prompt the writer for input cases, with retries and replay caching.

    An empty return means retries were exhausted; the caller should fall
    back to the deterministic generator rather than dropping the record.
    """
    prompt = render_writer_prompt(rec, cfg)

    cached = cache.get(rec.fn_id, cfg) if cache else None
    if cached is not None:
        return parse_writer_response(cached, rec, cfg.depth_cap, stats)

    for attempt in range(cfg.max_retries + 1):
        try:
            completion = client.complete(prompt, cfg)
        except TransportError as exc:
            log.debug("writer transport error for %s (attempt %d): %s", rec.fn_id, attempt, exc)
            continue
        cases = parse_writer_response(completion, rec, cfg.depth_cap, stats)
        if cases:
            if cache:
                cache.put(rec.fn_id, cfg, completion)
            return cases
    return []


# ---------------------------------------------------------------------------
# Deterministic fallback generation
# ---------------------------------------------------------------------------

_KINDS = ("int", "str", "float", "bool", "list_int", "dict_str")

_ANNOTATION_KINDS = {
    "int": "int", "str": "str", "float": "float", "bool": "bool",
    "list": "list_int", "List": "list_int", "sequence": "list_int",
    "Sequence": "list_int", "tuple": "list_int", "Tuple": "list_int",
    "dict": "dict_str", "Dict": "dict_str", "Mapping": "dict_str",
    "set": "list_int", "Set": "list_int",
}

_STRING_METHODS = {
    "join", "split", "strip", "lstrip", "rstrip", "lower", "upper", "title",
    "capitalize", "replace", "startswith", "endswith", "find", "rfind",
    "format", "encode", "isdigit", "isalpha", "zfill", "casefold", "count",
}


def infer_argument_kinds(rec: FunctionRecord) -> dict[str, str | None]:
    """Best-effort per-argument kind from annotations, defaults, and usage."""
    try:
        fn = ast.parse(rec.source).body[0]
        assert isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef))
    except (SyntaxError, AssertionError, IndexError):
        return {name: None for name in rec.arg_names}

    kinds: dict[str, str | None] = {name: None for name in rec.arg_names}

    all_args = fn.args.posonlyargs + fn.args.args + fn.args.kwonlyargs
    for arg in all_args:
        if arg.arg in kinds and arg.annotation is not None:
            kinds[arg.arg] = _kind_from_annotation(arg.annotation)

    defaults = fn.args.defaults
    if defaults:
        for arg, default in zip(all_args[len(all_args) - len(defaults):], defaults):
            if kinds.get(arg.arg) is None and isinstance(default, ast.Constant):
                kinds[arg.arg] = _kind_from_value(default.value)

    usage = _usage_kinds(fn, set(rec.arg_names))
    for name in rec.arg_names:
        if kinds[name] is None:
            kinds[name] = usage.get(name)
    return kinds


def _kind_from_annotation(node: ast.expr) -> str | None:
    root = node
    while isinstance(root, ast.Subscript):
        root = root.value
    if isinstance(root, ast.Name):
        return _ANNOTATION_KINDS.get(root.id)
    if isinstance(root, ast.Attribute):
        return _ANNOTATION_KINDS.get(root.attr)
    return None


def _kind_from_value(value: Any) -> str | None:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    if isinstance(value, (list, tuple)):
        return "list_int"
    if isinstance(value, dict):
        return "dict_str"
    return None


def _usage_kinds(fn: ast.AST, names: set[str]) -> dict[str, str]:
    # Two passes: direct evidence first (arithmetic, string methods,
    # iteration), then subscript containers keyed by their index kind.
    kinds: dict[str, str] = {}
    subscripted: dict[str, list[ast.expr]] = {}

    def mark(name: str, kind: str) -> None:
        kinds.setdefault(name, kind)

    for node in ast.walk(fn):
        if isinstance(node, ast.BinOp):
            for side in (node.left, node.right):
                if isinstance(side, ast.Name) and side.id in names:
                    if isinstance(node.op, (ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Pow, ast.Mod)):
                        mark(side.id, "int")
                    elif isinstance(node.op, ast.Add):
                        other = node.right if side is node.left else node.left
                        if isinstance(other, ast.Constant) and isinstance(other.value, str):
                            mark(side.id, "str")
                        else:
                            mark(side.id, "int")
        elif isinstance(node, ast.AugAssign):
            if isinstance(node.target, ast.Name) and node.target.id in names:
                mark(node.target.id, "int")
        elif isinstance(node, ast.Attribute):
            if isinstance(node.value, ast.Name) and node.value.id in names:
                if node.attr in _STRING_METHODS:
                    mark(node.value.id, "str")
                elif node.attr in {"append", "extend", "pop", "sort", "insert"}:
                    mark(node.value.id, "list_int")
                elif node.attr in {"keys", "values", "items", "get"}:
                    mark(node.value.id, "dict_str")
        elif isinstance(node, ast.Subscript):
            if isinstance(node.value, ast.Name) and node.value.id in names:
                subscripted.setdefault(node.value.id, []).append(node.slice)
        elif isinstance(node, ast.Compare):
            operands = [node.left] + list(node.comparators)
            const_kinds = [
                _kind_from_value(c.value) for c in operands if isinstance(c, ast.Constant)
            ]
            const_kinds = [k for k in const_kinds if k]
            if const_kinds:
                for side in operands:
                    if isinstance(side, ast.Name) and side.id in names:
                        mark(side.id, const_kinds[0])

    for name, slices in subscripted.items():
        if name in kinds:
            continue
        index_kind = None
        for sl in slices:
            if isinstance(sl, ast.Constant):
                index_kind = _kind_from_value(sl.value)
            elif isinstance(sl, ast.Name) and kinds.get(sl.id):
                index_kind = kinds[sl.id]
            if index_kind:
                break
        kinds[name] = "dict_str" if index_kind == "str" else "str"
    return kinds


def _sample_value(kind: str, rng: random.Random) -> Any:
    if kind == "int":
        return rng.randint(0, 20)
    if kind == "float":
        return round(rng.uniform(-10.0, 10.0), 3)
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "str":
        length = rng.randint(1, 8)
        return "".join(rng.choice(string_mod.ascii_lowercase) for _ in range(length))
    if kind == "list_int":
        return [rng.randint(0, 9) for _ in range(rng.randint(1, 5))]
    if kind == "dict_str":
        n = rng.randint(1, 4)
        return {
            "".join(rng.choice(string_mod.ascii_lowercase) for _ in range(3)): rng.randint(0, 9)
            for _ in range(n)
        }
    raise ValueError(f"unknown kind {kind}")


def generate_inputs_fallback(rec: FunctionRecord, seed: int, k: int = DEFAULT_EXAMPLES_REQUESTED) -> list[InputCase]:
    """Draw k deterministic input cases from inferred argument kinds.

    Arguments with no inferrable kind rotate across all kinds so the
    executed outcomes can still reject unusable guesses downstream.
    """
    kinds = infer_argument_kinds(rec)
    rng = random.Random(f"{seed}:{rec.fn_id}:fallback")
    cases: list[InputCase] = []
    seen: set[str] = set()
    attempts = 0
    while len(cases) < k and attempts < k * 10:
        attempts += 1
        bindings = {}
        for i, name in enumerate(rec.arg_names):
            kind = kinds.get(name) or _KINDS[(attempts + i) % len(_KINDS)]
            bindings[name] = _sample_value(kind, rng)
        key = values.canonical_text(bindings)
        if key in seen:
            continue
        seen.add(key)
        arg_texts = {name: values.canonical_text(v) for name, v in bindings.items()}
        cases.append(InputCase.from_arg_texts(rec.fn_id, arg_texts, origin="FALLBACK"))
    return cases

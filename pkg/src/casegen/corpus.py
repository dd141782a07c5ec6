"""Mine self-contained candidate functions from raw source trees.

The stage is a pure transformation: documents in, function records out.
Records are either accepted or carry a reject reason; rejection is data,
never an exception. Filtering rules run in a fixed order so that a
function failing several rules always reports the first one.
"""

from __future__ import annotations

import ast
import builtins
import hashlib
import io
import json
import re
import symtable
import tokenize
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

DEFAULT_SOURCE_CHAR_CAP = 4096
DEFAULT_SHINGLE_SIZE = 5
DEFAULT_JACCARD_THRESHOLD = 0.8

# Standard modules considered pure computation; anything else imported
# inside a function body is a third-party dependency for our purposes.
DEFAULT_MODULE_ALLOWLIST = frozenset({
    "abc", "array", "bisect", "cmath", "collections", "copy", "decimal",
    "enum", "fractions", "functools", "heapq", "itertools", "json", "keyword",
    "math", "numbers", "operator", "re", "statistics", "string", "struct",
    "textwrap", "typing", "unicodedata",
})

# Bare names whose use marks file/console-input/process/environment access.
DEFAULT_DENY_CALL_NAMES = frozenset({
    "open", "input", "exec", "eval", "compile", "__import__", "breakpoint",
    "exit", "quit", "globals", "locals", "vars", "memoryview",
})

# Dotted-prefix patterns for I/O-bearing attribute chains.
DEFAULT_DENY_ATTR_PREFIXES = (
    "os.", "sys.", "subprocess.", "socket.", "shutil.", "pathlib.", "io.",
    "urllib.", "http.", "requests.", "multiprocessing.", "threading.",
    "signal.", "tempfile.", "importlib.", "ctypes.", "builtins.", "ssl.",
    "ftplib.", "smtplib.",
)

DEFAULT_DECORATOR_ALLOWLIST = frozenset()

_BUILTIN_NAMES = frozenset(dir(builtins))

_DEF_LINE_RE = re.compile(r"^(?:async\s+def|def|class|@)", re.MULTILINE)


class RejectReason(str, Enum):
    SYNTAX = "SYNTAX"
    NO_ARGS = "NO_ARGS"
    NO_RETURN = "NO_RETURN"
    THIRD_PARTY = "THIRD_PARTY"
    EXTERNAL_IO = "EXTERNAL_IO"
    DUPLICATE = "DUPLICATE"
    TOO_LONG = "TOO_LONG"


@dataclass(frozen=True)
class SourceDocument:
    """One raw source file: a content-addressed unit of corpus input."""

    doc_id: str
    path: str
    text: str
    byte_len: int

    @classmethod
    def from_text(cls, path: str, text: str) -> "SourceDocument":
        if not text:
            raise ValueError("source document text must be non-empty")
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
        return cls(doc_id=digest, path=path, text=text, byte_len=len(text.encode("utf-8")))


@dataclass
class FunctionRecord:
    """A mined candidate function with provenance and filter verdict."""

    fn_id: str
    name: str
    source: str
    arg_names: list[str]
    arg_count: int
    doc_id: str
    reject_reason: RejectReason | None = None
    # Re-sequencing key for parallel extraction; not persisted.
    order_key: tuple[str, int] = field(default=("", 0), repr=False, compare=False)

    @property
    def accepted(self) -> bool:
        return self.reject_reason is None

    def to_json(self) -> dict:
        out = {
            "fn_id": self.fn_id,
            "name": self.name,
            "source": self.source,
            "arg_names": self.arg_names,
            "arg_count": self.arg_count,
            "doc_id": self.doc_id,
        }
        if self.reject_reason is not None:
            out["reject_reason"] = self.reject_reason.value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionRecord":
        reason = obj.get("reject_reason")
        return cls(
            fn_id=obj["fn_id"],
            name=obj["name"],
            source=obj["source"],
            arg_names=list(obj["arg_names"]),
            arg_count=obj["arg_count"],
            doc_id=obj["doc_id"],
            reject_reason=RejectReason(reason) if reason else None,
        )


@dataclass
class CorpusStats:
    """Per-run ingestion/extraction counters (funnel bookkeeping)."""

    documents: int = 0
    decode_skipped: int = 0
    parse_failed_docs: int = 0
    syntax_segments: int = 0

    def as_dict(self) -> dict:
        return {
            "documents": self.documents,
            "decode_skipped": self.decode_skipped,
            "parse_failed_docs": self.parse_failed_docs,
            "syntax_segments": self.syntax_segments,
        }


class ConfigError(Exception):
    """Fatal configuration problem (missing root, bad manifest, ...)."""


def normalize_source(source: str) -> str:
    """Whitespace/comment-insensitive token stream of a source text.

    Used for stable function IDs and exact-duplicate hashing; two
    sources differing only in comments or layout normalize identically.
    """
    try:
        tokens = _token_strings(source)
    except (tokenize.TokenizeError, SyntaxError, ValueError, IndentationError):
        return re.sub(r"\s+", " ", source).strip()
    return " ".join(tokens)


def _token_strings(source: str) -> list[str]:
    out = []
    skip = {
        tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT,
        tokenize.DEDENT, tokenize.ENCODING, tokenize.ENDMARKER,
    }
    for tok in tokenize.generate_tokens(io.StringIO(source).readline):
        if tok.type in skip:
            continue
        out.append(tok.string)
    return out


def source_fingerprint(source: str) -> str:
    return hashlib.sha256(normalize_source(source).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def ingest_sources(roots: Iterable[str | Path], stats: CorpusStats | None = None) -> Iterator[SourceDocument]:
    """Yield one SourceDocument per subject-language file under ``roots``.

    A root may be a directory tree (``*.py`` files, lexicographic path
    order) or a JSON-Lines manifest with ``{"path", "text"}`` objects.
    Files that do not decode as UTF-8 are skipped and counted.
    """
    stats = stats if stats is not None else CorpusStats()
    for root in roots:
        root = Path(root)
        if not root.exists():
            raise ConfigError(f"corpus root does not exist: {root}")
        if root.is_dir():
            for path in sorted(root.rglob("*.py"), key=lambda p: p.as_posix()):
                if not path.is_file():
                    continue
                try:
                    text = path.read_text(encoding="utf-8")
                except UnicodeDecodeError:
                    stats.decode_skipped += 1
                    continue
                if not text:
                    continue
                stats.documents += 1
                yield SourceDocument.from_text(path.as_posix(), text)
        elif root.suffix in {".jsonl", ".ndjson"}:
            with root.open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        obj = json.loads(line)
                        text = obj["text"]
                        path = obj["path"]
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ConfigError(f"bad manifest line {root}:{lineno}: {exc}") from exc
                    if not text:
                        continue
                    stats.documents += 1
                    yield SourceDocument.from_text(path, text)
        else:
            raise ConfigError(f"corpus root is neither a directory nor a .jsonl manifest: {root}")


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_functions(doc: SourceDocument, stats: CorpusStats | None = None) -> list[FunctionRecord]:
    """Extract top-level and class-level function definitions from a document.

    Malformed documents are handled by re-parsing top-level segments
    independently, so functions outside broken regions are still mined;
    functions inside unparseable regions yield no record. Whole-document
    parse failures are counted, never raised.
    """
    stats = stats if stats is not None else CorpusStats()
    try:
        tree = ast.parse(doc.text)
    except (SyntaxError, ValueError):
        stats.parse_failed_docs += 1
        return _extract_with_recovery(doc, stats)
    return _records_from_tree(doc, tree, doc.text, line_base=0)


def _records_from_tree(doc: SourceDocument, tree: ast.Module, text: str, line_base: int) -> list[FunctionRecord]:
    records = []
    lines = text.splitlines(keepends=True)
    nodes: list[ast.AST] = []
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            nodes.append(node)
        elif isinstance(node, ast.ClassDef):
            nodes.extend(
                n for n in node.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))
            )
    for node in nodes:
        rec = _record_from_node(doc, node, lines, line_base)
        if rec is not None:
            records.append(rec)
    return records


def _record_from_node(
    doc: SourceDocument,
    node: ast.FunctionDef | ast.AsyncFunctionDef,
    lines: list[str],
    line_base: int,
) -> FunctionRecord | None:
    deco_lines = [d.lineno for d in node.decorator_list]
    start = min([node.lineno] + deco_lines)
    end = node.end_lineno or node.lineno
    raw = "".join(lines[start - 1:end])
    source = _dedent_block(raw, node.col_offset)
    try:
        reparsed = ast.parse(source)
    except SyntaxError:
        return None
    if len(reparsed.body) != 1 or not isinstance(reparsed.body[0], (ast.FunctionDef, ast.AsyncFunctionDef)):
        return None

    args = node.args
    arg_names = [a.arg for a in args.posonlyargs + args.args + args.kwonlyargs]
    return FunctionRecord(
        fn_id=source_fingerprint(source),
        name=node.name,
        source=source,
        arg_names=arg_names,
        arg_count=len(arg_names),
        doc_id=doc.doc_id,
        order_key=(doc.path, line_base + start),
    )


def _dedent_block(raw: str, col_offset: int) -> str:
    if col_offset == 0:
        return raw
    out = []
    for line in raw.splitlines(keepends=True):
        if line.strip():
            out.append(line[col_offset:] if line[:col_offset].isspace() else line.lstrip())
        else:
            out.append(line)
    return "".join(out)


def _extract_with_recovery(doc: SourceDocument, stats: CorpusStats) -> list[FunctionRecord]:
    # Split at column-0 statement starts and parse each segment on its
    # own. Segments that still fail and contain a def are counted as
    # syntax casualties; they never produce records.
    lines = doc.text.splitlines(keepends=True)
    boundaries = [
        i for i, line in enumerate(lines)
        if line and not line[0].isspace() and not line.startswith("#")
    ]
    if not boundaries:
        return []
    boundaries.append(len(lines))

    records = []
    for a, b in zip(boundaries, boundaries[1:]):
        segment = "".join(lines[a:b])
        if not segment.strip():
            continue
        try:
            tree = ast.parse(segment)
        except (SyntaxError, ValueError):
            if _DEF_LINE_RE.search(segment):
                stats.syntax_segments += 1
            continue
        records.extend(_records_from_tree(doc, tree, segment, line_base=a))
    return records


# ---------------------------------------------------------------------------
# Self-containment filter
# ---------------------------------------------------------------------------

def check_self_contained(
    rec: FunctionRecord,
    allowlist: frozenset[str] | set[str] = DEFAULT_MODULE_ALLOWLIST,
    deny_call_names: frozenset[str] | set[str] = DEFAULT_DENY_CALL_NAMES,
    deny_attr_prefixes: tuple[str, ...] = DEFAULT_DENY_ATTR_PREFIXES,
    decorator_allowlist: frozenset[str] | set[str] = DEFAULT_DECORATOR_ALLOWLIST,
    source_char_cap: int = DEFAULT_SOURCE_CHAR_CAP,
) -> FunctionRecord:
    """Apply the acceptance rules in fixed order and stamp the verdict.

    Order: SYNTAX, NO_ARGS, NO_RETURN, THIRD_PARTY, EXTERNAL_IO, then the
    source-length cap. Free names beyond builtins, own bindings, and the
    function's own name make standalone execution impossible and are
    classed as EXTERNAL_IO, as are self/cls methods and non-allowlisted
    decorators.
    """
    if rec.reject_reason is not None:
        return rec

    try:
        tree = ast.parse(rec.source)
        fn = tree.body[0]
        assert isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef))
    except (SyntaxError, ValueError, AssertionError, IndexError):
        return replace(rec, reject_reason=RejectReason.SYNTAX)

    if rec.arg_count < 1:
        return replace(rec, reject_reason=RejectReason.NO_ARGS)

    if not _has_value_return(fn):
        return replace(rec, reject_reason=RejectReason.NO_RETURN)

    bad_import = _find_disallowed_import(fn, allowlist)
    if bad_import:
        return replace(rec, reject_reason=RejectReason.THIRD_PARTY)

    if _uses_external_io(tree, fn, rec, deny_call_names, deny_attr_prefixes, decorator_allowlist):
        return replace(rec, reject_reason=RejectReason.EXTERNAL_IO)

    if len(rec.source) > source_char_cap:
        return replace(rec, reject_reason=RejectReason.TOO_LONG)

    return replace(rec, reject_reason=None)


def _has_value_return(fn: ast.AST) -> bool:
    # Returns inside nested defs/lambdas do not return from this function.
    stack = list(ast.iter_child_nodes(fn))
    while stack:
        node = stack.pop()
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.Lambda)):
            continue
        if isinstance(node, ast.Return) and node.value is not None:
            return True
        stack.extend(ast.iter_child_nodes(node))
    return False


def _find_disallowed_import(fn: ast.AST, allowlist: frozenset[str] | set[str]) -> str | None:
    for node in ast.walk(fn):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".", 1)[0]
                if root not in allowlist:
                    return alias.name
        elif isinstance(node, ast.ImportFrom):
            if node.level:
                return "." * node.level + (node.module or "")
            root = (node.module or "").split(".", 1)[0]
            if root not in allowlist:
                return node.module or root
    return None


def _uses_external_io(
    tree: ast.Module,
    fn: ast.FunctionDef | ast.AsyncFunctionDef,
    rec: FunctionRecord,
    deny_call_names: frozenset[str] | set[str],
    deny_attr_prefixes: tuple[str, ...],
    decorator_allowlist: frozenset[str] | set[str],
) -> bool:
    if rec.arg_names and rec.arg_names[0] in {"self", "cls"}:
        return True

    for deco in fn.decorator_list:
        root = deco
        while isinstance(root, (ast.Attribute, ast.Call)):
            root = root.func if isinstance(root, ast.Call) else root.value
        name = root.id if isinstance(root, ast.Name) else None
        if name is None or name not in decorator_allowlist:
            return True

    for node in ast.walk(fn):
        if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
            if node.id in deny_call_names:
                return True
        elif isinstance(node, ast.Attribute):
            dotted = _dotted_chain(node)
            if dotted and any(dotted.startswith(p) or dotted == p.rstrip(".") for p in deny_attr_prefixes):
                return True

    return _has_unbound_free_names(rec)


def _dotted_chain(node: ast.Attribute) -> str | None:
    parts = [node.attr]
    cur = node.value
    while isinstance(cur, ast.Attribute):
        parts.append(cur.attr)
        cur = cur.value
    if isinstance(cur, ast.Name):
        parts.append(cur.id)
        return ".".join(reversed(parts))
    return None


def _has_unbound_free_names(rec: FunctionRecord) -> bool:
    # The source is just the def, so module scope binds only the
    # function's own name; anything else resolving global is unbound.
    try:
        table = symtable.symtable(rec.source, "<mined>", "exec")
    except SyntaxError:
        return True
    module_bound = {s.get_name() for s in table.get_symbols() if s.is_assigned() or s.is_imported()}
    module_bound.add(rec.name)

    stack = list(table.get_children())
    while stack:
        scope = stack.pop()
        for sym in scope.get_symbols():
            if sym.is_global() and not sym.is_assigned():
                name = sym.get_name()
                if name not in _BUILTIN_NAMES and name not in module_bound:
                    return True
        stack.extend(scope.get_children())
    return False


# ---------------------------------------------------------------------------
# Benchmark deduplication
# ---------------------------------------------------------------------------

@dataclass
class DedupIndex:
    """Read-only index of benchmark solutions for contamination checks."""

    exact_hashes: set[str] = field(default_factory=set)
    shingle_index: dict[tuple[str, ...], set[str]] = field(default_factory=dict)
    item_shingles: dict[str, frozenset[tuple[str, ...]]] = field(default_factory=dict)
    jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD
    shingle_size: int = DEFAULT_SHINGLE_SIZE

    @classmethod
    def build(
        cls,
        items: dict[str, str],
        jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD,
        shingle_size: int = DEFAULT_SHINGLE_SIZE,
    ) -> "DedupIndex":
        """Index benchmark reference solutions, mapping item id -> source."""
        if not 0 < jaccard_threshold <= 1:
            raise ValueError("jaccard_threshold must be in (0, 1]")
        idx = cls(jaccard_threshold=jaccard_threshold, shingle_size=shingle_size)
        for item_id, source in items.items():
            idx.exact_hashes.add(source_fingerprint(source))
            shingles = token_shingles(source, shingle_size)
            idx.item_shingles[item_id] = shingles
            for sh in shingles:
                idx.shingle_index.setdefault(sh, set()).add(item_id)
        return idx

    def is_empty(self) -> bool:
        return not self.exact_hashes


def token_shingles(source: str, size: int = DEFAULT_SHINGLE_SIZE) -> frozenset[tuple[str, ...]]:
    """Token n-gram shingles over the normalized token stream."""
    try:
        tokens = _token_strings(source)
    except (tokenize.TokenizeError, SyntaxError, ValueError, IndentationError):
        tokens = normalize_source(source).split()
    if len(tokens) < size:
        return frozenset({tuple(tokens)}) if tokens else frozenset()
    return frozenset(tuple(tokens[i:i + size]) for i in range(len(tokens) - size + 1))


def dedup_filter(rec: FunctionRecord, idx: DedupIndex) -> FunctionRecord:
    """Mark a record DUPLICATE when it collides with an indexed benchmark item."""
    if rec.reject_reason is not None or idx.is_empty():
        return rec
    if source_fingerprint(rec.source) in idx.exact_hashes:
        return replace(rec, reject_reason=RejectReason.DUPLICATE)
    shingles = token_shingles(rec.source, idx.shingle_size)
    candidates: set[str] = set()
    for sh in shingles:
        candidates.update(idx.shingle_index.get(sh, ()))
    for item_id in candidates:
        other = idx.item_shingles[item_id]
        union = len(shingles | other)
        if union and len(shingles & other) / union >= idx.jaccard_threshold:
            return replace(rec, reject_reason=RejectReason.DUPLICATE)
    return rec

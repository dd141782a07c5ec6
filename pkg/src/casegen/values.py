"""Closed value model shared by input generation, execution, and judging.

Values are restricted to: None, bool, int (arbitrary precision), float,
str, list, tuple, set, and dict with hashable keys. Every value has a
unique canonical text form; unordered containers (sets, dict items) are
ordered by the canonical text of their elements so that structurally
equal values always serialize identically.
"""

from __future__ import annotations

import ast
import hashlib
import math
import re
import types
from typing import Any, Iterator

# Container nesting deeper than this is rejected by the literal parser.
DEFAULT_DEPTH_CAP = 8

_ADDRESS_RE = re.compile(r"0x[0-9a-fA-F]+")

_SCALARS = (type(None), bool, int, float, str)


class CanonicalizationError(Exception):
    """Raised for values that cannot be given a stable text form."""


class SurfaceParseError(ValueError):
    """Raised when a literal surface cannot be parsed into model values."""


def canonical_text(value: Any) -> str:
    """Render ``value`` as deterministic literal text.

    Sets and dict items are sorted by the canonical text of their
    elements/keys, so insertion order never leaks into the output.
    Values outside the model render as ``<TypeName digest>``; cyclic
    structures and generator-like values raise CanonicalizationError.
    """
    return _render(value, seen=set())


def _render(value: Any, seen: set[int]) -> str:
    if isinstance(value, bool) or value is None:
        return repr(value)
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return repr(value)
    if isinstance(value, (types.GeneratorType, types.CoroutineType, types.AsyncGeneratorType)):
        raise CanonicalizationError(f"cannot canonicalize {type(value).__name__} values")

    if isinstance(value, (list, tuple, set, dict)):
        vid = id(value)
        if vid in seen:
            raise CanonicalizationError("cyclic structure")
        seen.add(vid)
        try:
            if isinstance(value, list):
                return "[" + ", ".join(_render(v, seen) for v in value) + "]"
            if isinstance(value, tuple):
                if len(value) == 1:
                    return "(" + _render(value[0], seen) + ",)"
                return "(" + ", ".join(_render(v, seen) for v in value) + ")"
            if isinstance(value, set):
                if not value:
                    return "set()"
                return "{" + ", ".join(sorted(_render(v, seen) for v in value)) + "}"
            items = sorted(
                ((_render(k, seen), _render(v, seen)) for k, v in value.items()),
                key=lambda kv: kv[0],
            )
            return "{" + ", ".join(f"{k}: {v}" for k, v in items) + "}"
        finally:
            seen.discard(vid)

    return _render_foreign(value)


def _render_foreign(value: Any) -> str:
    # Out-of-model values get a type tag plus a structural digest; memory
    # addresses are masked so the digest survives across processes.
    text = _ADDRESS_RE.sub("0x0", repr(value))
    digest = hashlib.sha256(f"{type(value).__name__}:{text}".encode("utf-8")).hexdigest()[:12]
    return f"<{type(value).__name__} {digest}>"


def _check_depth(node: Any, cap: int, depth: int = 0) -> None:
    if depth > cap:
        raise SurfaceParseError(f"nesting depth exceeds cap of {cap}")
    if isinstance(node, (list, tuple, set)):
        for item in node:
            _check_depth(item, cap, depth + 1)
    elif isinstance(node, dict):
        for k, v in node.items():
            _check_depth(k, cap, depth + 1)
            _check_depth(v, cap, depth + 1)


def _eval_literal_node(node: ast.expr, depth_cap: int, depth: int = 0) -> Any:
    if depth > depth_cap:
        raise SurfaceParseError(f"nesting depth exceeds cap of {depth_cap}")
    if isinstance(node, ast.Constant):
        if isinstance(node.value, _SCALARS):
            return node.value
        raise SurfaceParseError(f"unsupported constant {type(node.value).__name__}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _eval_literal_node(node.operand, depth_cap, depth)
        if isinstance(operand, bool) or not isinstance(operand, (int, float)):
            raise SurfaceParseError("unary sign on non-numeric literal")
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.List):
        return [_eval_literal_node(e, depth_cap, depth + 1) for e in node.elts]
    if isinstance(node, ast.Tuple):
        return tuple(_eval_literal_node(e, depth_cap, depth + 1) for e in node.elts)
    if isinstance(node, ast.Set):
        return {_eval_literal_node(e, depth_cap, depth + 1) for e in node.elts}
    if isinstance(node, ast.Dict):
        out = {}
        for k, v in zip(node.keys, node.values):
            if k is None:
                raise SurfaceParseError("dict unpacking is not a literal")
            out[_eval_literal_node(k, depth_cap, depth + 1)] = _eval_literal_node(v, depth_cap, depth + 1)
        return out
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id == "dict" and not node.args:
            return {
                kw.arg: _eval_literal_node(kw.value, depth_cap, depth + 1)
                for kw in node.keywords
                if kw.arg is not None
            }
        if node.func.id == "set" and not node.args and not node.keywords:
            return set()
        if node.func.id == "tuple" and not node.args and not node.keywords:
            return ()
        if node.func.id == "list" and not node.args and not node.keywords:
            return []
    raise SurfaceParseError(f"unsupported expression: {ast.dump(node)[:80]}")


def parse_literal(text: str, depth_cap: int = DEFAULT_DEPTH_CAP) -> Any:
    """Parse one literal expression in the closed value model."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise SurfaceParseError(f"not a literal: {exc.msg}") from exc
    try:
        return _eval_literal_node(node, depth_cap)
    except TypeError as exc:  # unhashable set element / dict key
        raise SurfaceParseError(str(exc)) from exc


def parse_binding_surface(surface: str, depth_cap: int = DEFAULT_DEPTH_CAP) -> dict[str, Any]:
    """Parse a keyword-binding surface such as ``dict(a=1, b='x')``.

    Plain dict literals with string keys (``{'a': 1}``) are accepted as
    well. Returns an ordered name -> value map.
    """
    try:
        node = ast.parse(surface.strip(), mode="eval").body
    except SyntaxError as exc:
        raise SurfaceParseError(f"unparseable binding surface: {exc.msg}") from exc

    try:
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "dict":
            if node.args:
                raise SurfaceParseError("positional arguments in dict(...) surface")
            out: dict[str, Any] = {}
            for kw in node.keywords:
                if kw.arg is None:
                    raise SurfaceParseError("**-unpacking in binding surface")
                out[kw.arg] = _eval_literal_node(kw.value, depth_cap)
            return out
        if isinstance(node, ast.Dict):
            out = {}
            for k, v in zip(node.keys, node.values):
                if not (isinstance(k, ast.Constant) and isinstance(k.value, str)):
                    raise SurfaceParseError("binding dict keys must be string literals")
                out[k.value] = _eval_literal_node(v, depth_cap)
            return out
    except TypeError as exc:  # unhashable set element / dict key
        raise SurfaceParseError(str(exc)) from exc
    raise SurfaceParseError("binding surface is neither dict(...) nor a dict literal")


def binding_arg_texts(surface: str) -> dict[str, str]:
    """Slice the per-argument literal texts out of a binding surface.

    The texts are returned exactly as written (quoting style preserved),
    keyed by argument name in surface order.
    """
    surface = surface.strip()
    try:
        node = ast.parse(surface, mode="eval").body
    except SyntaxError as exc:
        raise SurfaceParseError(f"unparseable binding surface: {exc.msg}") from exc

    texts: dict[str, str] = {}
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "dict":
        for kw in node.keywords:
            if kw.arg is None:
                raise SurfaceParseError("**-unpacking in binding surface")
            segment = ast.get_source_segment(surface, kw.value)
            if segment is None:
                raise SurfaceParseError("cannot slice argument text")
            texts[kw.arg] = segment
        return texts
    if isinstance(node, ast.Dict):
        for k, v in zip(node.keys, node.values):
            if not (isinstance(k, ast.Constant) and isinstance(k.value, str)):
                raise SurfaceParseError("binding dict keys must be string literals")
            segment = ast.get_source_segment(surface, v)
            if segment is None:
                raise SurfaceParseError("cannot slice argument text")
            texts[k.value] = segment
        return texts
    raise SurfaceParseError("binding surface is neither dict(...) nor a dict literal")


def render_binding_surface(arg_texts: dict[str, str]) -> str:
    """Build the normalized ``dict(name=text, ...)`` surface form."""
    inner = ", ".join(f"{name}={text}" for name, text in arg_texts.items())
    return f"dict({inner})"


def surface_from_values(bindings: dict[str, Any]) -> str:
    """Render a bindings map as a surface using canonical value texts."""
    return render_binding_surface({k: canonical_text(v) for k, v in bindings.items()})


def values_equal(a: Any, b: Any, rel_tol: float = 1e-6) -> bool:
    """Structural equality with relative tolerance on float leaves.

    Non-float leaves must match exactly (bool and int never coerce to
    float). Containers must match in kind and length.
    """
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, float) and isinstance(b, float):
        if math.isnan(a) and math.isnan(b):
            return True
        return math.isclose(a, b, rel_tol=rel_tol, abs_tol=0.0)
    if type(a) is not type(b):
        return False
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(values_equal(x, y, rel_tol) for x, y in zip(a, b))
    if isinstance(a, set):
        if len(a) != len(b):
            return False
        # Tolerant float membership: match by sorted canonical walk.
        return sorted(map(canonical_text, a)) == sorted(map(canonical_text, b)) or _set_close(a, b, rel_tol)
    if isinstance(a, dict):
        if len(a) != len(b):
            return False
        if set(map(canonical_text, a.keys())) != set(map(canonical_text, b.keys())):
            return False
        bk = {canonical_text(k): v for k, v in b.items()}
        return all(values_equal(v, bk[canonical_text(k)], rel_tol) for k, v in a.items())
    return a == b


def _set_close(a: set, b: set, rel_tol: float) -> bool:
    remaining = list(b)
    for x in a:
        for i, y in enumerate(remaining):
            if values_equal(x, y, rel_tol):
                del remaining[i]
                break
        else:
            return False
    return not remaining


def canonical_texts_match(got: str, expected: str, rel_tol: float = 1e-6) -> bool:
    """Compare two canonical texts, tolerating float rounding noise.

    Falls back to exact string equality when either text is not a
    parseable model literal (e.g. foreign-value digest forms).
    """
    if got == expected:
        return True
    try:
        gv = parse_literal(got, depth_cap=64)
        ev = parse_literal(expected, depth_cap=64)
    except SurfaceParseError:
        return False
    return values_equal(gv, ev, rel_tol)


def iter_floats(value: Any) -> Iterator[float]:
    """Yield every float leaf of a model value (used by tests)."""
    if isinstance(value, float):
        yield value
    elif isinstance(value, (list, tuple, set)):
        for v in value:
            yield from iter_floats(v)
    elif isinstance(value, dict):
        for k, v in value.items():
            yield from iter_floats(k)
            yield from iter_floats(v)

"""Deterministic text form for returned values, and literal binding parsing.

The canonical form: scalars via repr (floats shortest round-trip), list
and tuple literals in element order, sets and dict items sorted by the
canonical text of their elements/keys. Values outside the closed model
render as a type tag plus a structural digest with memory addresses
masked; cycles and generator-like values are rejected.
"""

from __future__ import annotations

import ast
import hashlib
import re
import types
from typing import Any

_ADDRESS_RE = re.compile(r"0x[0-9a-fA-F]+")

_SCALARS = (type(None), bool, int, float, str)


class CanonicalizationError(Exception):
    pass


class SurfaceParseError(ValueError):
    pass


def canonical_text(value: Any) -> str:
    return _render(value, set())


def _render(value: Any, seen: set[int]) -> str:
    if isinstance(value, bool) or value is None:
        return repr(value)
    if isinstance(value, (int, float, str)):
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

    masked = _ADDRESS_RE.sub("0x0", repr(value))
    digest = hashlib.sha256(f"{type(value).__name__}:{masked}".encode("utf-8")).hexdigest()[:12]
    return f"<{type(value).__name__} {digest}>"


def _eval_node(node: ast.expr, depth: int = 0) -> Any:
    if depth > 64:
        raise SurfaceParseError("literal nesting too deep")
    if isinstance(node, ast.Constant):
        if isinstance(node.value, _SCALARS):
            return node.value
        raise SurfaceParseError(f"unsupported constant {type(node.value).__name__}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _eval_node(node.operand, depth)
        if isinstance(operand, bool) or not isinstance(operand, (int, float)):
            raise SurfaceParseError("unary sign on non-numeric literal")
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.List):
        return [_eval_node(e, depth + 1) for e in node.elts]
    if isinstance(node, ast.Tuple):
        return tuple(_eval_node(e, depth + 1) for e in node.elts)
    if isinstance(node, ast.Set):
        return {_eval_node(e, depth + 1) for e in node.elts}
    if isinstance(node, ast.Dict):
        out = {}
        for k, v in zip(node.keys, node.values):
            if k is None:
                raise SurfaceParseError("dict unpacking is not a literal")
            out[_eval_node(k, depth + 1)] = _eval_node(v, depth + 1)
        return out
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id == "dict" and not node.args:
            return {kw.arg: _eval_node(kw.value, depth + 1)
                    for kw in node.keywords if kw.arg is not None}
        if node.func.id in {"set", "tuple", "list"} and not node.args and not node.keywords:
            return {"set": set(), "tuple": (), "list": []}[node.func.id]
    raise SurfaceParseError("unsupported expression in binding surface")


def parse_binding_surface(surface: str) -> dict[str, Any]:
    """Parse ``dict(name=value, ...)`` or a string-keyed dict literal."""
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
                out[kw.arg] = _eval_node(kw.value)
            return out
        if isinstance(node, ast.Dict):
            out = {}
            for k, v in zip(node.keys, node.values):
                if not (isinstance(k, ast.Constant) and isinstance(k.value, str)):
                    raise SurfaceParseError("binding dict keys must be string literals")
                out[k.value] = _eval_node(v)
            return out
    except TypeError as exc:  # unhashable set element / dict key
        raise SurfaceParseError(str(exc)) from exc
    raise SurfaceParseError("binding surface is neither dict(...) nor a dict literal")

"""YAML documents with line-aware field access for scenario and sweep files."""

from __future__ import annotations

import math
from pathlib import Path

import yaml

__all__ = ["SchemaError", "Node", "load_document"]


class SchemaError(ValueError):
    """A scenario or sweep file violates its schema."""

    def __init__(self, message: str, source: str = "<string>", field: str = "", line: int | None = None):
        self.message = message
        self.source = source
        self.field = field
        self.line = line
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {field + ': ' if field else ''}{message}")


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = v.start_mark.line + 1
            _line_map(v, path + (i,), out)
    return out


def load_document(text_or_path, source: str | None = None) -> "Node":
    if isinstance(text_or_path, Path):
        source = source or str(text_or_path)
        try:
            text = text_or_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read file ({exc.strerror})", source) from exc
    else:
        text = text_or_path
    source = source or "<string>"
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise SchemaError("document is empty", source)
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise SchemaError(f"invalid YAML ({exc.problem})", source, line=line) from exc
    finally:
        loader.dispose()
    return Node(data, (), _line_map(node), source)


class Node:
    """A value inside a document together with its location."""

    def __init__(self, value, path, lines, source):
        self.value = value
        self.path = path
        self._lines = lines
        self.source = source

    @property
    def field(self) -> str:
        return ".".join(str(p) if isinstance(p, str) else f"[{p}]" for p in self.path).replace(".[", "[")

    @property
    def line(self):
        return self._lines.get(self.path)

    def error(self, message: str) -> SchemaError:
        return SchemaError(message, self.source, self.field, self.line)

    def _child(self, key):
        return Node(self.value[key], self.path + (key,), self._lines, self.source)

    # -- containers --
    def mapping(self, allowed=None) -> "Node":
        if not isinstance(self.value, dict):
            raise self.error("expected a mapping")
        if allowed is not None:
            for key in self.value:
                if key not in allowed:
                    raise Node(None, self.path + (key,), self._lines, self.source).error("unknown field")
        return self

    def has(self, key) -> bool:
        return key in self.value and self.value[key] is not None

    def req(self, key) -> "Node":
        if not self.has(key):
            raise self.error(f"missing required field {key!r}")
        return self._child(key)

    def opt(self, key):
        return self._child(key) if self.has(key) else None

    def items(self):
        if not isinstance(self.value, list):
            raise self.error("expected a list")
        return [self._child(i) for i in range(len(self.value))]

    # -- scalars --
    def number(self, lo=-math.inf, hi=math.inf, lo_open=False) -> float:
        v = self.value
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.error(f"expected a finite number, got {v!r}")
        if v < lo or v > hi or (lo_open and v == lo):
            bound = f"({lo}, {hi}]" if lo_open else f"[{lo}, {hi}]"
            raise self.error(f"value {v} outside {bound}")
        return float(v)

    def integer(self, lo=-(2 ** 63), hi=2 ** 63 - 1) -> int:
        v = self.value
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(f"expected an integer, got {v!r}")
        if not lo <= v <= hi:
            raise self.error(f"value {v} outside [{lo}, {hi}]")
        return v

    def string(self, choices=None) -> str:
        v = self.value
        if not isinstance(v, str):
            raise self.error(f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise self.error(f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def boolean(self) -> bool:
        if not isinstance(self.value, bool):
            raise self.error(f"expected true or false, got {self.value!r}")
        return self.value

    def vector(self, n=None, lo=-math.inf) -> tuple:
        items = self.items()
        if n is not None and len(items) != n:
            raise self.error(f"expected {n} numbers, got {len(items)}")
        return tuple(i.number(lo) for i in items)

    def points(self, min_count=2) -> tuple:
        pts = tuple(p.vector(2) for p in self.items())
        if len(pts) < min_count:
            raise self.error(f"expected at least {min_count} points")
        return pts

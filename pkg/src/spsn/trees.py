"""Parsed document instances: typed, immutable data trees.

A data tree mirrors one JSON document.  Objects become heterogeneous
nodes with fixed, ordered fields; arrays become homogeneous nodes whose
elements all conform to one element schema; scalars become typed leaves.
``MISSING`` marks an absent leaf value or an entirely absent subtree
(both JSON ``null`` and absent object fields map to it).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from . import schema as sc
from .errors import MalformedJson, SchemaViolation
from .rng import substream


class _MissingType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Missing"


MISSING = _MissingType()


@dataclass(frozen=True)
class Leaf:
    value: object  # float | int | str

    def __repr__(self):
        return "Leaf(%r)" % (self.value,)


@dataclass(frozen=True)
class Het:
    fields: tuple  # tuple of (name, node)

    def child(self, name):
        for n, c in self.fields:
            if n == name:
                return c
        return MISSING


@dataclass(frozen=True)
class Hom:
    elements: tuple


Node = object  # Het | Hom | Leaf | MISSING


@dataclass(frozen=True)
class DataTree:
    root: Node


# ---------------------------------------------------------------------------
# Parsing against a schema


def _parse_node(raw, snode, path):
    if raw is None:
        return MISSING
    if isinstance(snode, sc.HetS):
        if not isinstance(raw, dict):
            raise SchemaViolation(path, "object", type(raw).__name__)
        known = set(snode.names)
        for name in raw:
            if name not in known:
                raise SchemaViolation(path + (name,), "absent field", "field")
        return Het(tuple(
            (name, _parse_node(raw.get(name), child, path + (name,)))
            for name, child in snode.fields
        ))
    if isinstance(snode, sc.HomS):
        if not isinstance(raw, list):
            raise SchemaViolation(path, "array", type(raw).__name__)
        return Hom(tuple(
            _parse_node(item, snode.element, path + (sc.ELEM,))
            for item in raw
        ))
    # leaf
    if isinstance(raw, (dict, list)):
        raise SchemaViolation(path, snode.kind, type(raw).__name__)
    if isinstance(raw, bool):
        raw = int(raw)
    if snode.kind == sc.STR:
        if not isinstance(raw, str):
            raise SchemaViolation(path, "string", type(raw).__name__)
        return Leaf(raw)
    if snode.kind == sc.REAL:
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return Leaf(float(raw))
        raise SchemaViolation(path, "number", type(raw).__name__)
    # INT: accept ints and integral floats (some writers emit 3.0 for 3)
    if isinstance(raw, int):
        return Leaf(raw)
    if isinstance(raw, float) and raw.is_integer():
        return Leaf(int(raw))
    raise SchemaViolation(path, "integer", repr(raw))


def parse_value(raw, schema: sc.Schema) -> DataTree:
    """Build a data tree from an already-decoded JSON value."""
    return DataTree(_parse_node(raw, schema.root, ()))


def parse_document(text: str, schema: sc.Schema) -> DataTree:
    """Parse one JSON document against ``schema``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc
    return parse_value(raw, schema)


def validate_tree(tree: DataTree, schema: sc.Schema) -> None:
    """Raise :class:`SchemaViolation` unless ``tree`` conforms to ``schema``."""
    _validate(tree.root, schema.root, ())


def _validate(node, snode, path):
    if node is MISSING:
        return
    if isinstance(snode, sc.HetS):
        if not isinstance(node, Het):
            raise SchemaViolation(path, "object", type(node).__name__)
        if tuple(n for n, _ in node.fields) != snode.names:
            raise SchemaViolation(path, "fields %r" % (snode.names,),
                                  tuple(n for n, _ in node.fields))
        for (name, child), (_, schild) in zip(node.fields, snode.fields):
            _validate(child, schild, path + (name,))
    elif isinstance(snode, sc.HomS):
        if not isinstance(node, Hom):
            raise SchemaViolation(path, "array", type(node).__name__)
        for el in node.elements:
            _validate(el, snode.element, path + (sc.ELEM,))
    else:
        if not isinstance(node, Leaf):
            raise SchemaViolation(path, snode.kind, type(node).__name__)
        v = node.value
        ok = (isinstance(v, str) if snode.kind == sc.STR
              else isinstance(v, float) if snode.kind == sc.REAL
              else isinstance(v, int) and not isinstance(v, bool))
        if not ok:
            raise SchemaViolation(path, snode.kind, repr(v))


# ---------------------------------------------------------------------------
# Serialization (the inverse writer: parse(serialize(t)) == t)


def tree_to_raw(tree: DataTree):
    return _unparse(tree.root)


def _unparse(node):
    if node is MISSING:
        return None
    if isinstance(node, Het):
        return {name: _unparse(child) for name, child in node.fields}
    if isinstance(node, Hom):
        return [_unparse(el) for el in node.elements]
    return node.value


def serialize_tree(tree: DataTree) -> str:
    return json.dumps(tree_to_raw(tree))


# ---------------------------------------------------------------------------
# Missing-value masking


def mask_missing(tree: DataTree, fraction: float, seed: int = 0,
                 rng=None) -> DataTree:
    """Independently replace each leaf by MISSING with probability ``fraction``.

    The mask is drawn from a dedicated sub-stream of ``seed`` (or from a
    caller-supplied generator), so it is reproducible and independent of
    any other randomness.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if rng is None:
        rng = substream(seed, "mask")

    def visit(node):
        if node is MISSING:
            return node
        if isinstance(node, Leaf):
            return MISSING if rng.random() < fraction else node
        if isinstance(node, Het):
            return Het(tuple((n, visit(c)) for n, c in node.fields))
        return Hom(tuple(visit(el) for el in node.elements))

    return DataTree(visit(tree.root))


# ---------------------------------------------------------------------------
# Corpus I/O: JSONL files (one document per line) or directories of .json


def iter_raw_documents(path):
    """Yield decoded JSON documents from a JSONL file or a .json directory."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
        if not names:
            raise MalformedJson("no .json files in %s" % path)
        for name in names:
            with open(os.path.join(path, name)) as fh:
                try:
                    yield json.load(fh)
                except json.JSONDecodeError as exc:
                    raise MalformedJson("%s: %s" % (name, exc)) from exc
        return
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedJson("line %d: %s" % (lineno, exc)) from exc


def load_corpus(path, schema: sc.Schema):
    """Parse every document in a JSONL file / directory against ``schema``."""
    return [parse_value(raw, schema) for raw in iter_raw_documents(path)]


def save_corpus(trees, path):
    with open(path, "w") as fh:
        for tree in trees:
            fh.write(serialize_tree(tree))
            fh.write("\n")

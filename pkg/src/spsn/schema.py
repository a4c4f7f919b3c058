"""Corpus schema: the per-corpus type skeleton with observed statistics.

A schema node mirrors the shape shared by all documents: objects become
heterogeneous nodes (fixed, ordered fields), arrays become homogeneous
nodes (one element schema plus cardinality statistics), and scalars
become typed leaves.  Leaf statistics (mean/variance, vocabularies,
cardinalities) collected here drive both circuit construction and
parameter initialization.

Schema paths address schema nodes as tuples of field names, with the
reserved step ``"[]"`` descending into the element of a homogeneous
node.  E.g. ``("atoms", "[]", "charge")``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ConflictingTypes, EmptyCorpus, MalformedJson

ELEM = "[]"

REAL = "real"
INT = "int"
STR = "str"

Path = tuple


@dataclass(frozen=True)
class LeafS:
    kind: str  # REAL | INT | STR
    count: int = 0
    mean: float = 0.0
    variance: float = 0.0
    # distinct observed values (sorted ints for INT, first-seen strings for
    # STR) with aligned occurrence counts; empty for REAL
    values: tuple = ()
    value_counts: tuple = ()

    @property
    def distinct(self) -> int:
        return len(self.values)

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class HomS:
    element: "SchemaNode"
    card_min: int = 0
    card_max: int = 0
    card_mean: float = 0.0
    count: int = 0


@dataclass(frozen=True)
class HetS:
    fields: tuple  # tuple of (name, SchemaNode)

    def child(self, name):
        for n, c in self.fields:
            if n == name:
                return c
        return None

    @property
    def names(self):
        return tuple(n for n, _ in self.fields)


SchemaNode = object  # LeafS | HomS | HetS


@dataclass(frozen=True)
class Schema:
    root: SchemaNode

    def node_at(self, path: Path) -> SchemaNode:
        node = self.root
        for step in path:
            if step == ELEM and isinstance(node, HomS):
                node = node.element
            elif isinstance(node, HetS):
                child = node.child(step)
                if child is None:
                    raise KeyError("no schema node at path %r" % (path,))
                node = child
            else:
                raise KeyError("no schema node at path %r" % (path,))
        return node

    def leaf_paths(self):
        return tuple(p for p, n in walk(self.root) if isinstance(n, LeafS))

    def hom_paths(self):
        return tuple(p for p, n in walk(self.root) if isinstance(n, HomS))


def walk(node, prefix=()):
    """Yield (path, node) over the whole schema in document order."""
    yield prefix, node
    if isinstance(node, HetS):
        for name, child in node.fields:
            yield from walk(child, prefix + (name,))
    elif isinstance(node, HomS):
        yield from walk(node.element, prefix + (ELEM,))


# ---------------------------------------------------------------------------
# Inference from raw JSON values


class _LeafAcc:
    # real values are kept and reduced with math.fsum at freeze time, so
    # the resulting moments are exact-rounded and independent of corpus
    # order; integers and strings aggregate exactly through count maps
    __slots__ = ("kind", "count", "reals", "counts")

    def __init__(self):
        self.kind = None
        self.count = 0
        self.reals = []
        self.counts = {}  # value -> occurrences (ints and strings)

    def add(self, value, path):
        if isinstance(value, bool):
            value = int(value)  # booleans are ingested as {0, 1} integers
        if isinstance(value, str):
            kind = STR
        elif isinstance(value, int):
            kind = INT
        elif isinstance(value, float):
            kind = REAL
        else:
            raise ConflictingTypes(path, "unsupported scalar %r" % (value,))
        if self.kind is None:
            self.kind = kind
        elif self.kind != kind:
            if {self.kind, kind} == {INT, REAL}:
                self.kind = REAL  # integers promote to reals at a shared path
            else:
                raise ConflictingTypes(
                    path, "cannot unify %s with %s" % (self.kind, kind)
                )
        self.count += 1
        if kind == STR:
            self.counts[value] = self.counts.get(value, 0) + 1
        elif kind == INT:
            self.counts[value] = self.counts.get(value, 0) + 1
        else:
            self.reals.append(value)

    def freeze(self):
        if self.kind == STR:
            values = tuple(self.counts)
            return LeafS(STR, self.count, 0.0, 0.0, values,
                         tuple(self.counts[v] for v in values))
        int_part = sorted(self.counts.items())
        total = math.fsum(self.reals) + math.fsum(
            float(v) * c for v, c in int_part)
        total_sq = math.fsum(x * x for x in self.reals) + math.fsum(
            float(v) * v * c for v, c in int_part)
        mean = total / self.count
        variance = max(total_sq / self.count - mean * mean, 0.0)
        if self.kind == INT:
            values = tuple(v for v, _ in int_part)
            return LeafS(INT, self.count, mean, variance, values,
                         tuple(c for _, c in int_part))
        return LeafS(REAL, self.count, mean, variance)


class _HomAcc:
    __slots__ = ("element", "card_min", "card_max", "card_total", "count")

    def __init__(self):
        self.element = None
        self.card_min = None
        self.card_max = 0
        self.card_total = 0
        self.count = 0

    def add(self, items, path):
        m = len(items)
        self.count += 1
        self.card_total += m
        self.card_max = max(self.card_max, m)
        self.card_min = m if self.card_min is None else min(self.card_min, m)
        for item in items:
            self.element = _fold(self.element, item, path + (ELEM,))

    def freeze(self, path):
        if self.element is None:
            # every array at this path was empty, so the element type is
            # unrecoverable from the corpus
            raise ConflictingTypes(path, "element type never observed")
        return HomS(_freeze(self.element, path + (ELEM,)),
                    self.card_min or 0, self.card_max,
                    self.card_total / self.count, self.count)


class _HetAcc:
    __slots__ = ("fields",)

    def __init__(self):
        self.fields = {}  # first-seen order

    def add(self, obj, path):
        for name, value in obj.items():
            if value is None:
                self.fields.setdefault(name, None)
                continue
            self.fields[name] = _fold(self.fields.get(name), value, path + (name,))

    def freeze(self, path):
        out = []
        for name, acc in self.fields.items():
            if acc is None:
                raise ConflictingTypes(path + (name,), "value type never observed")
            out.append((name, _freeze(acc, path + (name,))))
        return HetS(tuple(out))


def _fold(acc, value, path):
    if value is None:
        return acc
    if isinstance(value, dict):
        if acc is None:
            acc = _HetAcc()
        elif not isinstance(acc, _HetAcc):
            raise ConflictingTypes(path, "object vs scalar/array")
        acc.add(value, path)
    elif isinstance(value, list):
        if acc is None:
            acc = _HomAcc()
        elif not isinstance(acc, _HomAcc):
            raise ConflictingTypes(path, "array vs scalar/object")
        acc.add(value, path)
    else:
        if acc is None:
            acc = _LeafAcc()
        elif not isinstance(acc, _LeafAcc):
            raise ConflictingTypes(path, "scalar vs object/array")
        acc.add(value, path)
    return acc


def _freeze(acc, path):
    if isinstance(acc, _HetAcc) or isinstance(acc, _HomAcc):
        return acc.freeze(path)
    return acc.freeze()


def infer_schema(corpus) -> Schema:
    """Infer the least schema covering every document in ``corpus``.

    ``corpus`` is an iterable of already-decoded JSON values.  Leaf kinds
    are unified across documents (int promotes to real when both occur at
    the same path); irreconcilable kinds raise :class:`ConflictingTypes`.
    """
    acc = None
    n = 0
    for doc in corpus:
        n += 1
        if doc is None:
            raise ConflictingTypes((), "top-level null document")
        acc = _fold(acc, doc, ())
    if n == 0 or acc is None:
        raise EmptyCorpus("cannot infer a schema from an empty corpus")
    return Schema(_freeze(acc, ()))


# ---------------------------------------------------------------------------
# Serialization (version 1); bit-exact round-trips are required, which
# plain JSON floats provide (repr round-trips IEEE doubles).


def _node_to_json(node):
    if isinstance(node, LeafS):
        return {
            "node": "leaf",
            "kind": node.kind,
            "count": node.count,
            "mean": node.mean,
            "variance": node.variance,
            "values": list(node.values),
            "value_counts": list(node.value_counts),
        }
    if isinstance(node, HomS):
        return {
            "node": "hom",
            "element": _node_to_json(node.element),
            "card_min": node.card_min,
            "card_max": node.card_max,
            "card_mean": node.card_mean,
            "count": node.count,
        }
    return {
        "node": "het",
        "fields": [[name, _node_to_json(child)] for name, child in node.fields],
    }


def _node_from_json(obj):
    tag = obj["node"]
    if tag == "leaf":
        return LeafS(obj["kind"], obj["count"], obj["mean"], obj["variance"],
                     tuple(obj["values"]), tuple(obj["value_counts"]))
    if tag == "hom":
        return HomS(_node_from_json(obj["element"]), obj["card_min"],
                    obj["card_max"], obj["card_mean"], obj["count"])
    return HetS(tuple((name, _node_from_json(child)) for name, child in obj["fields"]))


def schema_to_json(schema: Schema) -> dict:
    return {"version": 1, "root": _node_to_json(schema.root)}


def schema_from_json(obj) -> Schema:
    if obj.get("version") != 1:
        raise MalformedJson("unsupported schema version %r" % (obj.get("version"),))
    return Schema(_node_from_json(obj["root"]))


def save_schema(schema: Schema, path):
    with open(path, "w") as fh:
        json.dump(schema_to_json(schema), fh)
        fh.write("\n")


def load_schema(path) -> Schema:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedJson(str(exc)) from exc
    return schema_from_json(obj)

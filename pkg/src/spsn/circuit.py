"""The computational-graph data model and its structural validator.

A circuit is an arena-indexed table of units (sum, product, set, input)
over a fixed schema, plus one flat float64 parameter vector with
per-unit slices.  Sum weights are stored as unconstrained logits and
normalized on read, so the simplex constraint holds by construction
throughout gradient training.  A set unit carries its cardinality
distribution inline (a truncated Poisson over {0..k_max}, renormalized)
and points at the root of its per-element feature sub-network.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from . import schema as sc
from .errors import MalformedJson

SUM = 0
PROD = 1
SET = 2
INPUT = 3

KIND_NAMES = {SUM: "sum", PROD: "product", SET: "set", INPUT: "input"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}

GAUSS = "gauss"
CAT = "cat"


@dataclass(slots=True)
class Unit:
    kind: int
    children: tuple
    paths: tuple  # input: leaf paths; set: (hom path,); otherwise ()
    pofs: int
    plen: int
    kmax: int  # set units only

    @property
    def feature(self):
        return self.children[0]


@dataclass(frozen=True)
class LeafSpec:
    """How one leaf path is scored and parameterized.

    Real leaves use a Gaussian.  String leaves, and integer leaves with at
    most ``k_cat`` distinct values, use a categorical over the observed
    vocabulary plus one out-of-vocabulary bucket.  Remaining integer
    leaves use a Gaussian on standardized values; ``log_jac`` carries the
    -log(scale) change-of-variables term so densities stay normalized.
    """

    path: tuple
    op: str  # GAUSS | CAT
    nparams: int
    center: float = 0.0
    scale: float = 1.0
    log_jac: float = 0.0
    values: tuple = ()
    index: dict = field(default_factory=dict, compare=False)

    @property
    def n_cats(self) -> int:
        return len(self.values) + 1  # +1 for the OOV bucket

    def cat_index(self, value) -> int:
        return self.index.get(value, len(self.values))


def make_leafspec(path, leaf: sc.LeafS, k_cat: int) -> LeafSpec:
    if leaf.kind == sc.STR or (leaf.kind == sc.INT and leaf.distinct <= k_cat):
        values = tuple(leaf.values)
        return LeafSpec(path, CAT, len(values) + 1, values=values,
                        index={v: i for i, v in enumerate(values)})
    if leaf.kind == sc.INT:
        scale = max(leaf.std, 1e-9)
        return LeafSpec(path, GAUSS, 2, center=leaf.mean, scale=scale,
                        log_jac=-float(np.log(scale)))
    return LeafSpec(path, GAUSS, 2)


@dataclass
class Circuit:
    units: list
    roots: tuple
    schema: sc.Schema
    params: np.ndarray
    priors_ofs: int
    k_cat: int = 100
    class_labels: tuple | None = None
    build_report: object = None  # populated by the builder, not serialized

    @property
    def n_classes(self) -> int:
        return len(self.roots)

    def leafspec(self, path) -> LeafSpec:
        return self._leafspecs[path]

    def __post_init__(self):
        self._leafspecs = {
            p: make_leafspec(p, n, self.k_cat)
            for p, n in sc.walk(self.schema.root)
            if isinstance(n, sc.LeafS)
        }

    def log_priors(self) -> np.ndarray:
        logits = self.params[self.priors_ofs:self.priors_ofs + self.n_classes]
        return logits - _logsumexp(logits)

    def copy(self) -> "Circuit":
        c = Circuit(self.units, self.roots, self.schema, self.params.copy(),
                    self.priors_ofs, self.k_cat, self.class_labels)
        c.build_report = self.build_report
        return c


def _logsumexp(x):
    m = np.max(x)
    return m + np.log(np.sum(np.exp(x - m)))


class CircuitBuilder:
    """Arena for assembling circuits; parameter slices are allocated on
    unit creation and the backing vector is materialized by ``finish``."""

    def __init__(self, schema: sc.Schema, k_cat: int = 100):
        self.schema = schema
        self.k_cat = k_cat
        self.units: list[Unit] = []
        self.nparams = 0
        self._init_values: list[tuple[int, float]] = []
        self.nodes = dict(sc.walk(schema.root))  # path -> schema node
        self._leafspecs = {
            p: make_leafspec(p, n, k_cat)
            for p, n in self.nodes.items()
            if isinstance(n, sc.LeafS)
        }
        self._input_plan = {}  # paths tuple -> (plen, ((rel_ofs, value), ...))

    def _alloc(self, n) -> int:
        ofs = self.nparams
        self.nparams += n
        return ofs

    def _push(self, unit) -> int:
        self.units.append(unit)
        return len(self.units) - 1

    def sum(self, children) -> int:
        children = tuple(children)
        if not children:
            raise ValueError("sum unit needs at least one child")
        return self._push(Unit(SUM, children, (), self._alloc(len(children)),
                               len(children), 0))

    def product(self, children) -> int:
        children = tuple(children)
        if len(children) < 2:
            raise ValueError("product unit needs at least two children")
        return self._push(Unit(PROD, children, (), 0, 0, 0))

    def input(self, paths) -> int:
        paths = tuple(paths)
        plan = self._input_plan.get(paths)
        if plan is None:
            # schema-informed neutral defaults: Gaussian mean at the observed
            # per-path center, unit spread; categorical logits uniform
            plen = 0
            inits = []
            for p in paths:
                spec = self._leafspecs[p]
                if spec.op == GAUSS and spec.scale == 1.0 and spec.center == 0.0:
                    node = self.nodes[p]
                    inits.append((plen, node.mean))
                    inits.append((plen + 1, float(np.log(max(node.std, 1e-3)))))
                plen += spec.nparams
            plan = (plen, tuple(inits))
            self._input_plan[paths] = plan
        plen, inits = plan
        ofs = self._alloc(plen)
        for rel, value in inits:
            self._init_values.append((ofs + rel, value))
        return self._push(Unit(INPUT, (), paths, ofs, plen, 0))

    def set(self, hom_path, k_max: int, feature: int = -1) -> int:
        node = self.nodes[hom_path]
        if not isinstance(node, sc.HomS):
            raise ValueError("set unit requires a homogeneous path, got %r" % (hom_path,))
        ofs = self._alloc(1)
        self._init_values.append((ofs, float(np.log(max(node.card_mean, 1e-2)))))
        return self._push(Unit(SET, (feature,), (hom_path,), ofs, 1, int(k_max)))

    def wire_feature(self, set_id: int, feature_id: int):
        unit = self.units[set_id]
        if unit.kind != SET or unit.children != (-1,):
            raise ValueError("unit %d is not an unwired set unit" % set_id)
        unit.children = (feature_id,)

    def finish(self, roots, order=None) -> Circuit:
        """Materialize the circuit.  ``order`` optionally supplies a known
        topological ordering of the arena (children before parents); when
        absent one is computed."""
        roots = tuple(roots)
        if getattr(self, "_finished", False):
            raise ValueError("builder already finished")
        self._finished = True
        for u in self.units:
            if u.kind == SET and u.children == (-1,):
                raise ValueError("unwired set unit")
        priors_ofs = self._alloc(len(roots))
        if order is None:
            order = _toposort(self.units, roots)
            if len(order) != len(self.units):
                raise ValueError("arena holds units unreachable from the roots")
        n = len(self.units)
        remap = np.empty(n, dtype=np.int64)
        remap[np.asarray(order, dtype=np.int64)] = np.arange(n)
        units = [None] * n
        for old, u in enumerate(self.units):
            u.children = tuple(int(remap[c]) for c in u.children)
            pos = int(remap[old])
            units[pos] = u
            for c in u.children:
                if c >= pos:
                    raise ValueError("supplied order is not topological")
        params = np.zeros(self.nparams, dtype=np.float64)
        for ofs, value in self._init_values:
            params[ofs] = value
        return Circuit(units, tuple(int(remap[r]) for r in roots), self.schema,
                       params, priors_ofs, self.k_cat)


def _toposort(units, roots):
    """Post-order over the DAG so children always precede parents."""
    order = []
    state = {}  # 0 in progress, 1 done
    for root in roots:
        stack = [(root, False)]
        while stack:
            uid, expanded = stack.pop()
            if state.get(uid) == 1:
                continue
            if expanded:
                state[uid] = 1
                order.append(uid)
                continue
            if state.get(uid) == 0:
                continue
            state[uid] = 0
            stack.append((uid, True))
            for c in units[uid].children:
                if state.get(c) != 1:
                    stack.append((c, False))
    return order


# ---------------------------------------------------------------------------
# Scopes


def full_scope(schema: sc.Schema) -> frozenset:
    """All schema positions a root must cover: leaf and homogeneous paths
    reachable without crossing a homogeneous node."""
    return frozenset(_block_paths(schema.root, ()))


def _block_paths(node, prefix):
    if isinstance(node, sc.HetS):
        out = []
        for name, child in node.fields:
            out.extend(_block_paths(child, prefix + (name,)))
        return out
    return [prefix]


def compute_scopes(circuit: Circuit):
    """Scope of every unit, computed in one pass over the (topologically
    ordered) arena.  Scopes are interned so equal scopes share identity."""
    intern = {}

    def canon(s):
        return intern.setdefault(s, s)

    scopes = [None] * len(circuit.units)
    for uid, u in enumerate(circuit.units):
        if u.kind == INPUT:
            scopes[uid] = canon(frozenset(u.paths))
        elif u.kind == SET:
            # the feature sub-network is interior to the set; its element
            # paths do not leak into the enclosing scope
            scopes[uid] = canon(frozenset(u.paths))
        else:
            acc = frozenset()
            for c in u.children:
                acc = acc | scopes[c]
            scopes[uid] = canon(acc)
    return scopes


def scope_of(circuit: Circuit, unit_id: int) -> frozenset:
    """The set of schema paths modeled by one unit."""
    memo = {}

    def rec(uid):
        got = memo.get(uid)
        if got is not None:
            return got
        u = circuit.units[uid]
        if u.kind in (INPUT, SET):
            s = frozenset(u.paths)
        else:
            s = frozenset()
            for c in u.children:
                s = s | rec(c)
        memo[uid] = s
        return s

    return rec(unit_id)


# ---------------------------------------------------------------------------
# Structural validation


@dataclass
class StructureReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "structure OK"
        return "\n".join("unit %d [%s]: %s" % (uid, kind, msg)
                         for uid, kind, msg in self.violations)


def validate_structure(circuit: Circuit) -> StructureReport:
    """Check smoothness (sum children share one scope), decomposability
    (product children have pairwise disjoint scopes), root coverage, and
    that every leaf/homogeneous path is modeled by some input/set unit."""
    scopes = compute_scopes(circuit)
    bad = []
    for uid, u in enumerate(circuit.units):
        if u.kind == SUM:
            first = scopes[u.children[0]]
            for c in u.children[1:]:
                if scopes[c] is not first and scopes[c] != first:
                    bad.append((uid, "smoothness",
                                "children have differing scopes"))
                    break
        elif u.kind == PROD:
            total = 0
            union = frozenset()
            for c in u.children:
                total += len(scopes[c])
                union = union | scopes[c]
            if len(union) != total:
                bad.append((uid, "decomposability",
                            "children have overlapping scopes"))

    want_root = full_scope(circuit.schema)
    for r in circuit.roots:
        if scopes[r] != want_root:
            bad.append((r, "root-scope", "root scope differs from the full schema"))

    covered = set()
    for u in circuit.units:
        if u.kind in (INPUT, SET):
            covered.update(u.paths)
    required = set()
    _required_positions(circuit.schema.root, (), required)
    for p in sorted(required - covered):
        bad.append((-1, "coverage", "no input/set unit models path %r" % (p,)))
    return StructureReport(bad)


def _required_positions(node, prefix, out):
    if isinstance(node, sc.HetS):
        for name, child in node.fields:
            _required_positions(child, prefix + (name,), out)
    elif isinstance(node, sc.HomS):
        out.add(prefix)
        _required_positions(node.element, prefix + (sc.ELEM,), out)
    else:
        out.add(prefix)


def count_units(circuit: Circuit) -> dict:
    counts = {"n_sum": 0, "n_prod": 0, "n_set": 0, "n_input": 0}
    for u in circuit.units:
        if u.kind == SUM:
            counts["n_sum"] += 1
        elif u.kind == PROD:
            counts["n_prod"] += 1
        elif u.kind == SET:
            counts["n_set"] += 1
        else:
            counts["n_input"] += 1
    counts["n_params"] = int(circuit.params.size)
    return counts


# ---------------------------------------------------------------------------
# Model file I/O


def model_to_json(circuit: Circuit) -> dict:
    return {
        "version": 1,
        "schema": sc.schema_to_json(circuit.schema),
        "k_cat": circuit.k_cat,
        "roots": list(circuit.roots),
        "priors_ofs": circuit.priors_ofs,
        "class_labels": (list(circuit.class_labels)
                         if circuit.class_labels is not None else None),
        "units": [
            [KIND_NAMES[u.kind], list(u.children),
             [list(p) for p in u.paths], u.pofs, u.plen, u.kmax]
            for u in circuit.units
        ],
        "params_b64": base64.b64encode(
            circuit.params.astype("<f8").tobytes()).decode("ascii"),
    }


def model_from_json(obj) -> Circuit:
    if obj.get("version") != 1:
        raise MalformedJson("unsupported model version %r" % (obj.get("version"),))
    schema = sc.schema_from_json(obj["schema"])
    units = [
        Unit(KIND_CODES[kind], tuple(children),
             tuple(tuple(p) for p in paths), pofs, plen, kmax)
        for kind, children, paths, pofs, plen, kmax in obj["units"]
    ]
    params = np.frombuffer(base64.b64decode(obj["params_b64"]),
                           dtype="<f8").astype(np.float64)
    labels = obj.get("class_labels")
    return Circuit(units, tuple(obj["roots"]), schema, params,
                   obj["priors_ofs"], obj.get("k_cat", 100),
                   tuple(labels) if labels is not None else None)


def save_model(circuit: Circuit, path):
    with open(path, "w") as fh:
        json.dump(model_to_json(circuit), fh)
        fh.write("\n")


def load_model(path) -> Circuit:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedJson(str(exc)) from exc
    return model_from_json(obj)

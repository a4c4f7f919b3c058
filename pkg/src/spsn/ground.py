"""Grounding: flatten (circuit, data tree) pairs into evaluation tapes.

The circuit is a template; the evaluation graph for a concrete tree
depends on how many elements each homogeneous node holds.  Grounding
walks the circuit against the tree once and emits a topologically
ordered tape of primitive ops that the kernels evaluate and
differentiate.  Tapes are parameter-independent, so one tape can be
re-evaluated under many parameter vectors (training, finite
differences) without rebuilding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from . import schema as sc
from . import trees as tr
from .circuit import CAT, INPUT, PROD, SUM, Circuit
from .errors import MissingInDensityMode, SchemaViolation


@dataclass
class Tape:
    kind: np.ndarray
    cs: np.ndarray
    ce: np.ndarray
    child: np.ndarray
    pofs: np.ndarray
    plen: np.ndarray
    iarg: np.ndarray
    jarg: np.ndarray
    farg: np.ndarray
    garg: np.ndarray

    @property
    def n(self) -> int:
        return int(self.kind.shape[0])

    def forward(self, params, val=None) -> float:
        if val is None:
            val = np.empty(self.n, dtype=np.float64)
        return float(K.forward(self.kind, self.cs, self.ce, self.child,
                               self.pofs, self.plen, self.iarg, self.jarg,
                               self.farg, self.garg, params, val))

    def backward(self, params, grad, seed=1.0, val=None, adj=None) -> float:
        """Accumulate seed * d(log value)/d(params) into ``grad``."""
        if val is None:
            val = np.empty(self.n, dtype=np.float64)
        if adj is None:
            adj = np.empty(self.n, dtype=np.float64)
        out = K.forward(self.kind, self.cs, self.ce, self.child, self.pofs,
                        self.plen, self.iarg, self.jarg, self.farg, self.garg,
                        params, val)
        K.backward(self.kind, self.cs, self.ce, self.child, self.pofs,
                   self.plen, self.iarg, self.jarg, self.farg, self.garg,
                   params, val, adj, seed, grad)
        return float(out)


class _TapeBuilder:
    def __init__(self):
        self.kind = []
        self.cs = []
        self.ce = []
        self.child = []
        self.pofs = []
        self.plen = []
        self.iarg = []
        self.jarg = []
        self.farg = []
        self.garg = []

    def emit(self, kind, children=(), pofs=0, plen=0, iarg=0, jarg=0,
             farg=0.0, garg=0.0) -> int:
        self.kind.append(kind)
        self.cs.append(len(self.child))
        self.child.extend(children)
        self.ce.append(len(self.child))
        self.pofs.append(pofs)
        self.plen.append(plen)
        self.iarg.append(iarg)
        self.jarg.append(jarg)
        self.farg.append(farg)
        self.garg.append(garg)
        return len(self.kind) - 1

    def freeze(self) -> Tape:
        ai = lambda xs: np.asarray(xs, dtype=np.int64)
        af = lambda xs: np.asarray(xs, dtype=np.float64)
        return Tape(ai(self.kind), ai(self.cs), ai(self.ce), ai(self.child),
                    ai(self.pofs), ai(self.plen), ai(self.iarg),
                    ai(self.jarg), af(self.farg), af(self.garg))


def _resolve(node, path, prefix):
    """Walk ``path`` (absolute) below ``prefix`` inside ``node``."""
    for step in path[len(prefix):]:
        if node is tr.MISSING:
            return tr.MISSING
        if not isinstance(node, tr.Het):
            raise SchemaViolation(path, "object", type(node).__name__)
        node = node.child(step)
    return node


def build_tape(circuit: Circuit, root: int, tree: tr.DataTree, *,
               marginal: bool, prefix=()) -> Tape:
    """Ground one unit of the circuit against ``tree``.

    ``root`` is usually a circuit root over the whole schema; passing an
    interior unit with the matching path ``prefix`` grounds just that
    sub-network against the subtree in ``tree``.

    With ``marginal`` unset, any missing value raises
    :class:`MissingInDensityMode`; with it set, missing leaves and
    subtrees contribute their exact marginal (log 1 = 0, or the
    cardinality-summed combine for whole missing collections, which the
    renormalized truncation also makes log 1).
    """
    tb = _TapeBuilder()
    units = circuit.units

    def leaf_op(spec, ofs, value, path):
        if value is tr.MISSING:
            if not marginal:
                raise MissingInDensityMode(path)
            return tb.emit(K.OP_CONST0)
        if not isinstance(value, tr.Leaf):
            raise SchemaViolation(path, "leaf", type(value).__name__)
        v = value.value
        if spec.op == CAT:
            if isinstance(v, float):
                raise SchemaViolation(path, "categorical value", repr(v))
            return tb.emit(K.OP_CAT, pofs=ofs, plen=spec.n_cats,
                           iarg=spec.cat_index(v))
        if isinstance(v, bool) or isinstance(v, str):
            raise SchemaViolation(path, "number", repr(v))
        z = (float(v) - spec.center) / spec.scale
        return tb.emit(K.OP_GAUSS, pofs=ofs, plen=2, farg=z, garg=spec.log_jac)

    def walk(uid, prefix, node):
        u = units[uid]
        if u.kind == SUM:
            kids = [walk(c, prefix, node) for c in u.children]
            return tb.emit(K.OP_SUM, kids, pofs=u.pofs, plen=u.plen)
        if u.kind == PROD:
            kids = [walk(c, prefix, node) for c in u.children]
            return tb.emit(K.OP_PROD, kids)
        if u.kind == INPUT:
            ofs = u.pofs
            kids = []
            for p in u.paths:
                spec = circuit.leafspec(p)
                kids.append(leaf_op(spec, ofs, _resolve(node, p, prefix), p))
                ofs += spec.nparams
            if len(kids) == 1:
                return kids[0]
            return tb.emit(K.OP_PROD, kids)
        # SET
        hom = u.paths[0]
        sub = _resolve(node, hom, prefix)
        if sub is tr.MISSING:
            if not marginal:
                raise MissingInDensityMode(hom)
            # sum over cardinalities of a fully marginalized feature:
            # total mass one
            return tb.emit(K.OP_CONST0)
        if not isinstance(sub, tr.Hom):
            raise SchemaViolation(hom, "array", type(sub).__name__)
        m = len(sub.elements)
        if m > u.kmax:
            return tb.emit(K.OP_NEGINF)
        elems = [walk(u.feature, hom + (sc.ELEM,), el) for el in sub.elements]
        return tb.emit(K.OP_SET, elems, pofs=u.pofs, plen=1,
                       iarg=m, jarg=u.kmax)

    walk(root, prefix, tree.root)
    return tb.freeze()


def build_root_tapes(circuit: Circuit, tree: tr.DataTree, *,
                     marginal: bool) -> list:
    return [build_tape(circuit, r, tree, marginal=marginal)
            for r in circuit.roots]

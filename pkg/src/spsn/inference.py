"""Exact log-density evaluation and exact marginal inference.

All arithmetic runs in the log domain.  Results are plain floats in
[-inf, +inf) and are never NaN.  Evaluation is pure over an immutable
circuit, so batches of trees may be scored concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from . import schema as sc
from . import trees as tr
from .circuit import GAUSS, INPUT, PROD, SUM, Circuit
from .ground import build_tape
from .trees import validate_tree

_HALF_LOG_2PI = 0.9189385332046727


def log_density(circuit: Circuit, root: int, tree: tr.DataTree) -> float:
    """Exact log density of a fully observed tree under one root."""
    validate_tree(tree, circuit.schema)
    return build_tape(circuit, circuit.roots[root], tree,
                      marginal=False).forward(circuit.params)


def marginal_log_density(circuit: Circuit, root: int, tree: tr.DataTree) -> float:
    """Exact log marginal: missing leaves and subtrees are integrated out.

    With no missing values this equals :func:`log_density`; with
    everything missing it is 0 (the total mass is one).
    """
    validate_tree(tree, circuit.schema)
    return build_tape(circuit, circuit.roots[root], tree,
                      marginal=True).forward(circuit.params)


def log_densities(circuit: Circuit, tree: tr.DataTree, *,
                  marginal: bool = True) -> np.ndarray:
    """Per-root log (marginal) densities as one vector."""
    validate_tree(tree, circuit.schema)
    out = np.empty(circuit.n_classes, dtype=np.float64)
    for k, r in enumerate(circuit.roots):
        out[k] = build_tape(circuit, r, tree,
                            marginal=marginal).forward(circuit.params)
    return out


def log_posteriors(circuit: Circuit, tree: tr.DataTree) -> np.ndarray:
    """Class log posteriors: log prior + per-root log marginal, normalized."""
    if circuit.n_classes < 2:
        raise ValueError("classification requires a circuit with >= 2 roots")
    joint = circuit.log_priors() + log_densities(circuit, tree, marginal=True)
    m = np.max(joint)
    if not math.isfinite(m):
        # every class assigns zero density; fall back to the priors
        return circuit.log_priors()
    return joint - (m + np.log(np.sum(np.exp(joint - m))))


def classify(circuit: Circuit, tree: tr.DataTree):
    """Return (class index, log-posterior vector)."""
    post = log_posteriors(circuit, tree)
    return int(np.argmax(post)), post


def expectation(circuit: Circuit, root: int, path, tree: tr.DataTree) -> float:
    """First moment of the Gaussian leaf at ``path``, with the remaining
    missing values of ``tree`` integrated out and the observed ones kept
    as evidence weights.

    Only leaves outside homogeneous nodes are supported: a moment of
    "some element's" leaf has no unique target.  The value propagates in
    the linear domain; the queried input contributes its mean where a
    marginal would contribute one, so on a normalized circuit with the
    queried leaf missing this is exactly E[x | evidence] * P(evidence).
    """
    if sc.ELEM in path:
        raise ValueError("moment queries inside homogeneous nodes are not supported")
    spec = circuit.leafspec(path)
    if spec.op != GAUSS:
        raise ValueError("moment queries require a Gaussian leaf at %r" % (path,))
    validate_tree(tree, circuit.schema)
    params = circuit.params

    def resolve(node, p, prefix):
        for step in p[len(prefix):]:
            if node is tr.MISSING:
                return tr.MISSING
            node = node.child(step)
        return node

    def leaf_log_marginal(sub, p, ofs, s):
        if sub is tr.MISSING:
            return 0.0
        v = sub.value
        if s.op != GAUSS:
            logits = params[ofs:ofs + s.n_cats]
            mx = float(np.max(logits))
            lse = mx + math.log(float(np.sum(np.exp(logits - mx))))
            return float(logits[s.cat_index(v)]) - lse
        z = (float(v) - s.center) / s.scale
        zz = (z - params[ofs]) * math.exp(-params[ofs + 1])
        return -0.5 * zz * zz - params[ofs + 1] - _HALF_LOG_2PI + s.log_jac

    def walk(uid, prefix, node):
        u = circuit.units[uid]
        if u.kind == SUM:
            w = params[u.pofs:u.pofs + u.plen]
            mx = np.max(w)
            w = np.exp(w - (mx + np.log(np.sum(np.exp(w - mx)))))
            return float(sum(wi * walk(c, prefix, node)
                             for wi, c in zip(w, u.children)))
        if u.kind == PROD:
            out = 1.0
            for c in u.children:
                out *= walk(c, prefix, node)
            return out
        if u.kind == INPUT:
            out = 1.0
            ofs = u.pofs
            for p in u.paths:
                s = circuit.leafspec(p)
                if p == path:
                    out *= s.center + s.scale * params[ofs]  # E[x]
                else:
                    out *= math.exp(
                        leaf_log_marginal(resolve(node, p, prefix), p, ofs, s))
                ofs += s.nparams
            return out
        # SET: the queried path is never interior, so the whole unit
        # contributes its marginal given the observed evidence
        tape = build_tape(circuit, uid, tr.DataTree(node), marginal=True,
                          prefix=prefix)
        return math.exp(tape.forward(params))

    return walk(circuit.roots[root], (), tree.root)


def batch_log_density(circuit: Circuit, trees, *, marginal: bool = False):
    """Score many trees under root 0; returns a float64 vector."""
    fn = marginal_log_density if marginal else log_density
    return np.array([fn(circuit, 0, t) for t in trees], dtype=np.float64)

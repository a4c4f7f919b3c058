"""Ancestral sampling of new data trees from a circuit.

Descending from a root: sum units draw one child by their normalized
weights, product units recurse into every child, set units draw a
cardinality from the truncated renormalized Poisson by inverse CDF and
then that many independent element subtrees from the feature network,
and input units draw leaf values (categoricals never emit the
out-of-vocabulary bucket).  Every sample validates against the schema.
"""

from __future__ import annotations

import math

import numpy as np

from . import schema as sc
from . import trees as tr
from .circuit import CAT, INPUT, PROD, SUM, Circuit
from .rng import substream


def _softmax(x):
    m = np.max(x)
    e = np.exp(x - m)
    return e / e.sum()


def truncated_poisson_pmf(log_rate: float, k_max: int) -> np.ndarray:
    ks = np.arange(k_max + 1)
    logw = ks * log_rate - np.array([math.lgamma(k + 1.0) for k in ks])
    return _softmax(logw)


def _sample_leaf(circuit, path, ofs, rng):
    spec = circuit.leafspec(path)
    params = circuit.params
    node = circuit.schema.node_at(path)
    if spec.op == CAT:
        logits = params[ofs:ofs + spec.n_cats - 1]  # OOV bucket excluded
        probs = _softmax(logits)
        value = spec.values[rng.choice(len(probs), p=probs)]
        return tr.Leaf(value)
    mu = params[ofs]
    sigma = math.exp(params[ofs + 1])
    z = mu + sigma * rng.standard_normal()
    x = spec.center + spec.scale * z
    if node.kind == sc.INT:
        return tr.Leaf(int(round(x)))
    return tr.Leaf(float(x))


def _sample_unit(circuit, uid, prefix, rng):
    """Sample the subtree fragment covered by unit ``uid``; returns a map
    from absolute path to sampled node for the unit's scope."""
    u = circuit.units[uid]
    if u.kind == SUM:
        w = _softmax(circuit.params[u.pofs:u.pofs + u.plen])
        pick = u.children[rng.choice(len(w), p=w)]
        return _sample_unit(circuit, pick, prefix, rng)
    if u.kind == PROD:
        out = {}
        for c in u.children:
            out.update(_sample_unit(circuit, c, prefix, rng))
        return out
    if u.kind == INPUT:
        out = {}
        ofs = u.pofs
        for p in u.paths:
            out[p] = _sample_leaf(circuit, p, ofs, rng)
            ofs += circuit.leafspec(p).nparams
        return out
    # SET
    hom = u.paths[0]
    pmf = truncated_poisson_pmf(circuit.params[u.pofs], u.kmax)
    m = int(rng.choice(len(pmf), p=pmf))
    elem_schema = circuit.schema.node_at(hom).element
    elems = []
    for _ in range(m):
        frag = _sample_unit(circuit, u.feature, hom + (sc.ELEM,), rng)
        elems.append(_assemble(elem_schema, hom + (sc.ELEM,), frag))
    return {hom: tr.Hom(tuple(elems))}


def _assemble(snode, prefix, frag):
    """Rebuild a tree node from sampled path fragments."""
    if isinstance(snode, sc.HetS):
        return tr.Het(tuple(
            (name, _assemble(child, prefix + (name,), frag))
            for name, child in snode.fields
        ))
    return frag[prefix]


def sample_tree(circuit: Circuit, root: int = 0, seed: int = 0,
                rng=None) -> tr.DataTree:
    """Draw one tree from the density of the given root."""
    if rng is None:
        rng = substream(seed, "sample")
    frag = _sample_unit(circuit, circuit.roots[root], (), rng)
    return tr.DataTree(_assemble(circuit.schema.root, (), frag))


def sample_corpus(circuit: Circuit, n: int, seed: int, out_path,
                  root: int = 0) -> None:
    """Write ``n`` independently sampled trees to a JSONL file."""
    rng = substream(seed, "sample")
    with open(out_path, "w") as fh:
        for _ in range(n):
            frag = _sample_unit(circuit, circuit.roots[root], (), rng)
            tree = tr.DataTree(_assemble(circuit.schema.root, (), frag))
            fh.write(tr.serialize_tree(tree))
            fh.write("\n")


def sample_trees(circuit: Circuit, n: int, seed: int, root: int = 0):
    """Draw ``n`` trees as a list (the in-memory variant of
    :func:`sample_corpus`, same stream)."""
    rng = substream(seed, "sample")
    out = []
    for _ in range(n):
        frag = _sample_unit(circuit, circuit.roots[root], (), rng)
        out.append(tr.DataTree(_assemble(circuit.schema.root, (), frag)))
    return out

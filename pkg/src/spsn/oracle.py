"""Independent brute-force references for the test suite and deep validation.

These deliberately avoid the recursive marginalization path: masses are
computed by exhaustive enumeration over every completion of the free
parts of a region (all leaf values including the out-of-vocabulary
bucket, and all cardinalities up to the truncation bound), gradients by
central finite differences, and exchangeability by explicit permutation
sweeps.

Enumeration treats collections as ordered tuples and applies a 1/m!
correction per enumerated collection instance, which integrates the
unordered set space correctly while keeping the code a plain product
loop.  Observed collections are evidence: their ordering weight stays in
place so results compare directly against the recursive marginal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import schema as sc
from . import trees as tr
from .builder import BuildConfig, spsn_network
from .circuit import CAT, SET, Circuit
from .errors import DataError, TooLarge
from .ground import build_tape
from .inference import log_density, marginal_log_density
from .learn import backward
from .rng import substream
from .trees import MISSING, DataTree, Het, Hom, Leaf

ENUM_LIMIT = 10 ** 7

_OOV_STR = "\x00oov"


def free_tree(schema: sc.Schema) -> DataTree:
    """The everything-region: a tree with the whole root missing."""
    return DataTree(MISSING)


def _kmax_at(circuit: Circuit, hom_path) -> int:
    for u in circuit.units:
        if u.kind == SET and u.paths[0] == hom_path:
            return u.kmax
    raise KeyError("no set unit at path %r" % (hom_path,))


def _leaf_domain(circuit, path, allowed):
    spec = circuit.leafspec(path)
    if spec.op != CAT:
        raise ValueError(
            "brute-force enumeration requires categorical leaves; %r is not"
            % (path,))
    oov = _OOV_STR if (not spec.values or isinstance(spec.values[0], str)) \
        else max(spec.values) + 1
    domain = list(spec.values) + [oov]
    if allowed and path in allowed:
        domain = [v for v in domain if v in set(allowed[path])]
    return domain


def _count(circuit, snode, node, path, allowed):
    if isinstance(snode, sc.HetS):
        total = 1
        for name, child in snode.fields:
            sub = node.child(name) if isinstance(node, Het) else MISSING
            total *= _count(circuit, child, sub, path + (name,), allowed)
            if total > ENUM_LIMIT:
                return total
        return total
    if isinstance(snode, sc.HomS):
        if isinstance(node, Hom):
            total = 1
            for el in node.elements:
                total *= _count(circuit, snode.element, el,
                                path + (sc.ELEM,), allowed)
            return total
        per = _count(circuit, snode.element, MISSING, path + (sc.ELEM,), allowed)
        kmax = _kmax_at(circuit, path)
        return sum(per ** m for m in range(kmax + 1))
    if isinstance(node, Leaf):
        return 1
    return len(_leaf_domain(circuit, path, allowed))


def _completions(circuit, snode, node, path, allowed, evidence_ordering):
    """Yield (completed node, log ordering correction) pairs."""
    if isinstance(snode, sc.HetS):
        fields = []
        for name, child in snode.fields:
            sub = node.child(name) if isinstance(node, Het) else MISSING
            fields.append([
                (name, c, corr)
                for c, corr in _completions(circuit, child, sub,
                                            path + (name,), allowed,
                                            evidence_ordering)
            ])
        for combo in itertools.product(*fields):
            yield (Het(tuple((n, c) for n, c, _ in combo)),
                   sum(corr for _, _, corr in combo))
        return
    if isinstance(snode, sc.HomS):
        if isinstance(node, Hom):
            packs = [list(_completions(circuit, snode.element, el,
                                       path + (sc.ELEM,), allowed,
                                       evidence_ordering))
                     for el in node.elements]
            base = 0.0 if evidence_ordering else -math.lgamma(len(packs) + 1.0)
            for combo in itertools.product(*packs):
                yield (Hom(tuple(c for c, _ in combo)),
                       base + sum(r for _, r in combo))
            return
        per = list(_completions(circuit, snode.element, MISSING,
                                path + (sc.ELEM,), allowed, evidence_ordering))
        kmax = _kmax_at(circuit, path)
        for m in range(kmax + 1):
            for combo in itertools.product(per, repeat=m):
                yield (Hom(tuple(c for c, _ in combo)),
                       sum(r for _, r in combo) - math.lgamma(m + 1.0))
        return
    if isinstance(node, Leaf):
        yield node, 0.0
        return
    for v in _leaf_domain(circuit, path, allowed):
        yield Leaf(v), 0.0


def brute_force_mass(circuit: Circuit, region: DataTree, root: int = 0,
                     allowed: dict | None = None, limit: int = ENUM_LIMIT,
                     evidence_ordering: bool = True) -> float:
    """Log probability mass of a region by exhaustive enumeration.

    ``region`` is a tree whose MISSING parts are free; ``allowed``
    optionally restricts the value set of free leaves at given paths.
    Free collections enumerate every cardinality up to the truncation
    bound as ordered tuples, each divided by m!, which integrates the
    unordered set space exactly: the everything-region of a normalized
    circuit yields 0.0.

    Observed collections follow ``evidence_ordering``.  When true (the
    default), the given ordering is evidence and keeps its full weight,
    making results directly comparable to the recursive marginal.  When
    false, they are read as ordered points of the enumeration space and
    divided by m! as well, giving the mass of a single fully fixed
    outcome (the log density minus the ordering corrections).
    """
    n_terms = _count(circuit, circuit.schema.root, region.root, (), allowed)
    if n_terms > limit:
        raise TooLarge("enumeration needs %d terms (limit %d)" % (n_terms, limit))
    terms = np.empty(n_terms, dtype=np.float64)
    i = 0
    for node, corr in _completions(circuit, circuit.schema.root, region.root,
                                   (), allowed, evidence_ordering):
        terms[i] = log_density(circuit, root, DataTree(node)) + corr
        i += 1
    assert i == n_terms
    m = np.max(terms)
    if not math.isfinite(m):
        return -math.inf
    return float(m + np.log(np.sum(np.exp(terms - m))))


def _eval_longdouble(tape, params):
    """Extended-precision tape interpreter, independent of the production
    kernels.  Finite differences subtract two nearly equal log densities,
    so the oracle needs more headroom than float64 rounding allows."""
    from . import kernels as K

    one = np.longdouble(1.0)
    val = np.empty(tape.n, dtype=np.longdouble)
    logfact = np.cumsum(np.concatenate(
        ([np.longdouble(0.0)],
         np.log(np.arange(1, int(tape.jarg.max(initial=0)) + 1,
                          dtype=np.longdouble)))))
    for i in range(tape.n):
        k = tape.kind[i]
        o = tape.pofs[i]
        if k == K.OP_CONST0:
            val[i] = 0.0
        elif k == K.OP_NEGINF:
            val[i] = -np.inf
        elif k == K.OP_GAUSS:
            z = (np.longdouble(tape.farg[i]) - params[o]) * np.exp(-params[o + 1])
            val[i] = (-0.5 * z * z - params[o + 1]
                      - np.longdouble(0.91893853320467274178)
                      + np.longdouble(tape.garg[i]))
        elif k == K.OP_CAT:
            logits = params[o:o + tape.plen[i]]
            m = logits.max()
            val[i] = logits[tape.iarg[i]] - (m + np.log(np.exp(logits - m).sum()))
        elif k == K.OP_SUM:
            w = params[o:o + tape.plen[i]]
            a = w + val[tape.child[tape.cs[i]:tape.ce[i]]]
            m1, m2 = a.max(), w.max()
            if not np.isfinite(m1):
                val[i] = -np.inf
            else:
                val[i] = (m1 + np.log(np.exp(a - m1).sum())
                          - (m2 + np.log(np.exp(w - m2).sum())))
        elif k == K.OP_PROD:
            val[i] = val[tape.child[tape.cs[i]:tape.ce[i]]].sum()
        else:  # OP_SET
            kmax = tape.jarg[i]
            th = params[o]
            a = np.arange(kmax + 1, dtype=np.longdouble) * th - logfact[:kmax + 1]
            m = a.max()
            logz = m + np.log(np.exp(a - m).sum())
            elems = np.sort(val[tape.child[tape.cs[i]:tape.ce[i]]])
            val[i] = tape.iarg[i] * th - logz + elems.sum() * one
    return val[tape.n - 1]


def finite_diff_grad(circuit: Circuit, tree: DataTree, h: float = 1e-5,
                     root: int = 0) -> np.ndarray:
    """Central finite differences of the (marginal) log density per
    parameter; the independent reference for the analytic backward pass."""
    tape = build_tape(circuit, circuit.roots[root], tree, marginal=True)
    params = circuit.params.astype(np.longdouble)
    step = np.longdouble(h)
    grad = np.zeros(params.size, dtype=np.float64)
    for j in range(params.size):
        orig = params[j]
        params[j] = orig + step
        hi = _eval_longdouble(tape, params)
        params[j] = orig - step
        lo = _eval_longdouble(tape, params)
        params[j] = orig
        grad[j] = float((hi - lo) / (2.0 * step))
    return grad


def gradient_check(circuit: Circuit, tree: DataTree, h: float = 1e-5,
                   rtol: float = 1e-4, atol: float = 1e-8):
    """Compare analytic and finite-difference gradients.

    Returns (ok, worst relative error over parameters with non-negligible
    gradient).  Parameters with |gradient| < 1e-8 on both sides are held
    to the absolute tolerance instead.
    """
    _, ana = backward(circuit, tree)
    num = finite_diff_grad(circuit, tree, h)
    worst = 0.0
    ok = True
    for a, f in zip(ana, num):
        if abs(a) < 1e-8 and abs(f) < 1e-8:
            if abs(a - f) > atol:
                ok = False
            continue
        rel = abs(a - f) / max(abs(a), abs(f))
        worst = max(worst, rel)
        if rel > rtol:
            ok = False
    return ok, worst


def _hom_nodes(node, path=()):
    """All (path-to-node accessor, Hom node) pairs in a tree."""
    out = []

    def visit(n, loc):
        if isinstance(n, Het):
            for i, (_, c) in enumerate(n.fields):
                visit(c, loc + ((0, i),))
        elif isinstance(n, Hom):
            out.append((loc, n))
            for i, el in enumerate(n.elements):
                visit(el, loc + ((1, i),))

    visit(node, ())
    return out


def _replace(node, loc, new):
    if not loc:
        return new
    (kind, i), rest = loc[0], loc[1:]
    if kind == 0:
        fields = list(node.fields)
        fields[i] = (fields[i][0], _replace(fields[i][1], rest, new))
        return Het(tuple(fields))
    elems = list(node.elements)
    elems[i] = _replace(elems[i], rest, new)
    return Hom(tuple(elems))


def permutation_sweep(circuit: Circuit, tree: DataTree, max_perms: int = 24,
                      root: int = 0) -> float:
    """Maximum |log-density change| over permutations of the elements of
    each collection node, one node at a time.  Expected 0 up to float
    noise (element contributions are accumulated in sorted order)."""
    base = marginal_log_density(circuit, root, tree)
    worst = 0.0
    for loc, hom in _hom_nodes(tree.root):
        n = len(hom.elements)
        if n < 2:
            continue
        count = 0
        for perm in itertools.permutations(range(n)):
            count += 1
            if count > max_perms:
                break
            permuted = Hom(tuple(hom.elements[i] for i in perm))
            t2 = DataTree(_replace(tree.root, loc, permuted))
            worst = max(worst, abs(marginal_log_density(circuit, root, t2) - base))
    return worst


def het_swap_flagged(circuit: Circuit, tree: DataTree, root: int = 0,
                     tol: float = 1e-9) -> bool:
    """Negative control: swapping the values of two differently-typed
    fields of some heterogeneous node must either break validation or
    change the density."""
    base = marginal_log_density(circuit, root, tree)

    def kinds_differ(a, b):
        return type(a) is not type(b) or (
            isinstance(a, Leaf) and isinstance(b, Leaf)
            and type(a.value) is not type(b.value))

    def visit(node, loc):
        if isinstance(node, Het):
            for i in range(len(node.fields)):
                for j in range(i + 1, len(node.fields)):
                    a, b = node.fields[i][1], node.fields[j][1]
                    if a is MISSING or b is MISSING or not kinds_differ(a, b):
                        continue
                    fields = list(node.fields)
                    fields[i] = (fields[i][0], b)
                    fields[j] = (fields[j][0], a)
                    swapped = DataTree(_replace(tree.root, loc, Het(tuple(fields))))
                    try:
                        val = marginal_log_density(circuit, root, swapped)
                    except DataError:
                        return True
                    if abs(val - base) > tol:
                        return True
            for i, (_, c) in enumerate(node.fields):
                got = visit(c, loc + ((0, i),))
                if got is not None:
                    return got
        elif isinstance(node, Hom):
            for i, el in enumerate(node.elements):
                got = visit(el, loc + ((1, i),))
                if got is not None:
                    return got
        return None

    return bool(visit(tree.root, ()))


# ---------------------------------------------------------------------------
# Random all-categorical circuits: the workhorse family for normalization,
# marginalization, and exchangeability checks (small enough to enumerate).


def random_discrete_schema(rng, max_leaf_paths: int = 3,
                           with_hom: bool = True) -> sc.Schema:
    vocabularies = (("a", "b"), ("a", "b", "c"), ("x", "y"))

    def leaf():
        vocab = vocabularies[rng.integers(len(vocabularies))]
        counts = tuple(int(rng.integers(1, 6)) for _ in vocab)
        return sc.LeafS(sc.STR, sum(counts), 0.0, 0.0, vocab, counts)

    budget = int(rng.integers(1, max_leaf_paths + 1))
    fields = []
    hom_added = False
    i = 0
    while budget > 0:
        name = "f%d" % i
        i += 1
        if with_hom and not hom_added and rng.random() < 0.5:
            inner = int(rng.integers(1, min(budget, 2) + 1))
            if inner == 1:
                element = leaf()
            else:
                element = sc.HetS(tuple(("g%d" % j, leaf()) for j in range(inner)))
            fields.append((name, sc.HomS(element, 0, 2, 1.0, 4)))
            hom_added = True
            budget -= inner
        else:
            fields.append((name, leaf()))
            budget -= 1
    return sc.Schema(sc.HetS(tuple(fields)))


def random_discrete_circuit(seed: int, k_max: int = 3,
                            max_leaf_paths: int = 3,
                            with_hom: bool = True) -> Circuit:
    """A random small all-categorical circuit with randomized parameters."""
    rng = substream(seed, "oracle-circuit")
    schema = random_discrete_schema(rng, max_leaf_paths, with_hom)
    cfg = BuildConfig(n_c=1, n_l=int(rng.integers(1, 3)),
                      n_s=int(rng.integers(2, 4)), n_p=2, k_max=k_max)
    circuit = spsn_network(schema, cfg)
    circuit.params[:] = rng.normal(0.0, 1.0, circuit.params.size)
    return circuit


# ---------------------------------------------------------------------------
# Deep validation: engine checks on a downscaled all-categorical circuit


@dataclass
class DeepCheck:
    name: str
    ok: bool
    detail: str


def deep_check(circuit: Circuit, seed: int = 0, n_queries: int = 20) -> list:
    """Run the normalization, marginalization, permutation, and gradient
    oracles on downscaled random circuits (categorical leaves, small
    truncation).  Exercises the full evaluation and gradient machinery
    that the given model runs on."""
    from .sample import sample_trees

    out = []
    worst_norm = 0.0
    worst_marg = 0.0
    worst_perm = 0.0
    worst_grad = 0.0
    grads_ok = True
    for trial in range(3):
        c = random_discrete_circuit(seed * 101 + trial)
        worst_norm = max(worst_norm, abs(brute_force_mass(c, free_tree(c.schema))))
        trees = sample_trees(c, max(n_queries // 3, 2), seed * 7 + trial)
        for i, t in enumerate(trees):
            masked = tr.mask_missing(t, 0.5, seed + i)
            bf = brute_force_mass(c, masked)
            mg = marginal_log_density(c, 0, masked)
            worst_marg = max(worst_marg, abs(bf - mg))
            worst_perm = max(worst_perm, permutation_sweep(c, t))
            ok, rel = gradient_check(c, masked)
            grads_ok = grads_ok and ok
            worst_grad = max(worst_grad, rel)
    out.append(DeepCheck("normalization", worst_norm <= 1e-9,
                         "max |log mass| = %.3g" % worst_norm))
    out.append(DeepCheck("marginalization", worst_marg <= 1e-9,
                         "max |brute - recursive| = %.3g" % worst_marg))
    out.append(DeepCheck("exchangeability", worst_perm <= 1e-12,
                         "max permutation deviation = %.3g" % worst_perm))
    out.append(DeepCheck("gradients", grads_ok,
                         "max relative error = %.3g" % worst_grad))
    return out

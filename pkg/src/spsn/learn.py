"""Gradient-based parameter estimation.

Two objectives are supported: generative training maximizes the mean
log density of a single-root circuit; discriminative training maximizes
the mean class log posterior (softmax over per-root log densities plus
learnable log priors).  Optimization is plain ADAM over minibatches with
best-validation checkpoint selection.  All parameters stay feasible by
reparameterization (logits, log scales, log rates); numeric guard rails
clamp the raw parameters after each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import schema as sc
from . import trees as tr
from .circuit import CAT, GAUSS, INPUT, SET, SUM, Circuit
from .errors import NonFiniteGradient
from .ground import build_root_tapes, build_tape
from .rng import substream

NLL = "nll"
CROSS_ENTROPY = "xent"

_LOG_STD_FLOOR = math.log(1e-3)
_LOGIT_CLAMP = 30.0


@dataclass
class TrainConfig:
    objective: str = NLL           # NLL | CROSS_ENTROPY
    step_size: float = 0.01       # grid used in practice: 0.1, 0.01, 0.001
    batch_size: int = 10
    epochs: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.objective not in (NLL, CROSS_ENTROPY):
            raise ValueError("objective must be %r or %r" % (NLL, CROSS_ENTROPY))


def backward(circuit: Circuit, tree: tr.DataTree, root: int = 0):
    """Log density (marginal over any missing values) of ``tree`` under
    one root, and its exact gradient w.r.t. the full parameter vector."""
    grad = np.zeros_like(circuit.params)
    tape = build_tape(circuit, circuit.roots[root], tree, marginal=True)
    value = tape.backward(circuit.params, grad)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("single-tree backward pass")
    return value, grad


# ---------------------------------------------------------------------------
# Initialization from corpus statistics


class _PathStats:
    __slots__ = ("count", "total", "total_sq", "counts")

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0
        self.counts = {}

    def add(self, value):
        self.count += 1
        if isinstance(value, str):
            self.counts[value] = self.counts.get(value, 0) + 1
        else:
            self.total += value
            self.total_sq += float(value) * value
            self.counts[value] = self.counts.get(value, 0) + 1

    @property
    def mean(self):
        return self.total / self.count if self.count else 0.0

    @property
    def std(self):
        if not self.count:
            return 0.0
        v = self.total_sq / self.count - self.mean ** 2
        return math.sqrt(max(v, 0.0))


def corpus_stats(schema: sc.Schema, corpus):
    """Per-path leaf statistics and per-hom-path cardinality lists."""
    leaf = {}
    card = {}

    def visit(node, snode, path):
        if node is tr.MISSING:
            return
        if isinstance(snode, sc.HetS):
            for (name, child), (_, schild) in zip(node.fields, snode.fields):
                visit(child, schild, path + (name,))
        elif isinstance(snode, sc.HomS):
            card.setdefault(path, []).append(len(node.elements))
            for el in node.elements:
                visit(el, snode.element, path + (sc.ELEM,))
        else:
            leaf.setdefault(path, _PathStats()).add(node.value)

    for tree in corpus:
        visit(tree.root, schema.root, ())
    return leaf, card


def init_params(circuit: Circuit, corpus, seed: int = 0) -> Circuit:
    """Data-driven initialization on a fresh copy of the circuit.

    Gaussian leaves take the per-path corpus mean and std (std floored at
    1e-3), categorical logits take Laplace-smoothed (+1) empirical
    frequencies including the out-of-vocabulary bucket, cardinality rates
    take the empirical mean count, and sum logits take small uniform
    noise so mixture components can diverge.  Gaussian means additionally
    receive +-1% of the corpus std as jitter; without it, sibling
    components under one sum start identical and stay identical under
    gradient flow.
    """
    out = circuit.copy()
    params = out.params
    leaf, card = corpus_stats(circuit.schema, corpus)
    rng = substream(seed, "init")
    for u in out.units:
        if u.kind == SUM:
            params[u.pofs:u.pofs + u.plen] = rng.uniform(-0.01, 0.01, u.plen)
        elif u.kind == SET:
            counts = card.get(u.paths[0], [])
            mean = float(np.mean(counts)) if counts else 1.0
            params[u.pofs] = math.log(max(mean, 1e-2))
        elif u.kind == INPUT:
            ofs = u.pofs
            for p in u.paths:
                spec = out.leafspec(p)
                st = leaf.get(p)
                if spec.op == GAUSS:
                    if st is not None and st.count:
                        mean = (st.mean - spec.center) / spec.scale
                        std = st.std / spec.scale
                    else:
                        mean, std = 0.0, 1.0
                    params[ofs] = mean + 0.01 * std * rng.uniform(-1.0, 1.0)
                    params[ofs + 1] = math.log(max(std, 1e-3))
                else:
                    counts = np.ones(spec.n_cats)  # Laplace +1, OOV included
                    if st is not None:
                        for v, c in st.counts.items():
                            idx = spec.index.get(v)
                            if idx is not None:
                                counts[idx] += c
                    params[ofs:ofs + spec.n_cats] = np.log(counts / counts.sum())
                ofs += spec.nparams
    params[out.priors_ofs:out.priors_ofs + out.n_classes] = 0.0
    return out


# ---------------------------------------------------------------------------
# ADAM


class Adam:
    """Textbook ADAM ascent on a flat parameter vector."""

    def __init__(self, n, step_size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params += self.step_size * mhat / (np.sqrt(vhat) + self.eps)


def _clamp_params(circuit: Circuit):
    """Numeric guard rails: keep raw logits bounded and log-stds floored so
    degenerate corpora cannot drive gradients non-finite."""
    p = circuit.params
    for u in circuit.units:
        if u.kind == SUM:
            np.clip(p[u.pofs:u.pofs + u.plen], -_LOGIT_CLAMP, _LOGIT_CLAMP,
                    out=p[u.pofs:u.pofs + u.plen])
        elif u.kind == SET:
            np.clip(p[u.pofs:u.pofs + 1], -_LOGIT_CLAMP, _LOGIT_CLAMP,
                    out=p[u.pofs:u.pofs + 1])
        elif u.kind == INPUT:
            ofs = u.pofs
            for path in u.paths:
                spec = circuit.leafspec(path)
                if spec.op == CAT:
                    np.clip(p[ofs:ofs + spec.n_cats], -_LOGIT_CLAMP,
                            _LOGIT_CLAMP, out=p[ofs:ofs + spec.n_cats])
                else:
                    p[ofs + 1] = min(max(p[ofs + 1], _LOG_STD_FLOOR), _LOGIT_CLAMP)
                ofs += spec.nparams
    o = circuit.priors_ofs
    np.clip(p[o:o + circuit.n_classes], -_LOGIT_CLAMP, _LOGIT_CLAMP,
            out=p[o:o + circuit.n_classes])


# ---------------------------------------------------------------------------
# Fitting


@dataclass
class FitResult:
    circuit: Circuit
    history: list = field(default_factory=list)
    selected_epoch: int = -1


def _posterior_backward(tape_sets, labels, circuit, params, grad):
    """Mean log posterior of the true class over a batch; exact gradient
    including the prior logits, accumulated into ``grad``."""
    n_c = circuit.n_classes
    o = circuit.priors_ofs
    logprior = params[o:o + n_c] - _lse(params[o:o + n_c])
    total = 0.0
    inv = 1.0 / len(tape_sets)
    for tapes, y in zip(tape_sets, labels):
        joint = np.array([tape.forward(params) for tape in tapes]) + logprior
        lse = _lse(joint)
        post = np.exp(joint - lse)
        total += joint[y] - lse
        for k, tape in enumerate(tapes):
            seed = ((1.0 if k == y else 0.0) - post[k]) * inv
            if seed != 0.0:
                tape.backward(params, grad, seed=seed)
        onehot = np.zeros(n_c)
        onehot[y] = 1.0
        grad[o:o + n_c] += (onehot - post) * inv
    return total * inv


def _lse(x):
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def fit(circuit: Circuit, corpus, config: TrainConfig, labels=None) -> FitResult:
    """Train a copy of ``circuit`` on ``corpus``.

    For the discriminative objective, ``labels`` gives one class index
    per tree.  A validation split is carved off the end of a seeded
    shuffle of the corpus; the returned circuit carries the parameters of
    the best validation epoch.
    """
    xent = config.objective == CROSS_ENTROPY
    if xent:
        if labels is None:
            raise ValueError("cross-entropy training requires labels")
        if circuit.n_classes < 2:
            raise ValueError("cross-entropy training requires >= 2 roots")
        labels = list(labels)
        if len(labels) != len(corpus):
            raise ValueError("one label per tree required")

    out = circuit.copy()
    params = out.params
    rng = substream(config.seed, "train")

    order = rng.permutation(len(corpus))
    n_val = int(round(config.validation_fraction * len(corpus)))
    n_val = min(max(n_val, 0), len(corpus) - 1)
    val_idx = order[len(corpus) - n_val:]
    trn_idx = order[:len(corpus) - n_val]

    # tapes are parameter-independent: ground every tree once
    if xent:
        grounded = [build_root_tapes(out, t, marginal=True) for t in corpus]
    else:
        grounded = [[build_tape(out, out.roots[0], t, marginal=True)]
                    for t in corpus]

    def eval_metric(idx):
        if len(idx) == 0:
            return math.nan
        total = 0.0
        if xent:
            o = out.priors_ofs
            logprior = params[o:o + out.n_classes] - _lse(
                params[o:o + out.n_classes])
            for i in idx:
                joint = np.array([t.forward(params) for t in grounded[i]])
                joint = joint + logprior
                total += joint[labels[i]] - _lse(joint)
        else:
            for i in idx:
                total += grounded[i][0].forward(params)
        return total / len(idx)

    grad = np.zeros_like(params)
    opt = Adam(params.size, config.step_size, config.beta1, config.beta2,
               config.eps)
    best = (-math.inf, params.copy(), -1)
    history = []

    for epoch in range(config.epochs):
        perm = rng.permutation(len(trn_idx))
        for start in range(0, len(trn_idx), config.batch_size):
            batch = [trn_idx[j] for j in perm[start:start + config.batch_size]]
            if not batch:
                continue
            grad[:] = 0.0
            if xent:
                _posterior_backward([grounded[i] for i in batch],
                                    [labels[i] for i in batch], out, params,
                                    grad)
            else:
                inv = 1.0 / len(batch)
                for i in batch:
                    grounded[i][0].backward(params, grad, seed=inv)
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradient("batch starting at tree %d of epoch %d"
                                        % (start, epoch))
            if config.step_size != 0.0:
                opt.step(params, grad)
                _clamp_params(out)
        train_metric = eval_metric(trn_idx)
        val_metric = eval_metric(val_idx)
        select_on = val_metric if not math.isnan(val_metric) else train_metric
        is_best = select_on > best[0]
        if is_best:
            best = (select_on, params.copy(), epoch)
        history.append({"epoch": epoch, "train_objective": train_metric,
                        "val_objective": val_metric, "best": is_best})

    params[:] = best[1]
    return FitResult(out, history, best[2])

"""Benchmark the evaluation kernels: numba JIT versus the pure-numpy path.

Builds a two-level model, grounds a corpus of sampled trees into tapes
once, then times repeated forward and forward+backward passes through
both backends.  Run:

    python3 benchmarks/bench_kernels.py [--trees 200] [--repeats 5]
"""

import argparse
import time

import numpy as np

from spsn import BuildConfig, infer_schema, init_params, parse_value, spsn_network
from spsn import kernels as K
from spsn.ground import build_tape
from spsn.rng import substream
from spsn.sample import sample_trees


def synthetic_schema():
    rng = substream(0, "bench-data")
    docs = []
    for _ in range(20):
        docs.append({
            "a": float(rng.normal()),
            "b": float(rng.normal()),
            "s": "xyz"[rng.integers(3)],
            "items": [
                {"u": float(rng.normal()), "v": int(rng.integers(5)),
                 "tags": ["ab"[rng.integers(2)]
                          for _ in range(rng.integers(0, 3))]}
                for _ in range(rng.integers(0, 5))
            ],
        })
    return infer_schema(docs), docs


def run(fn_fwd, fn_bwd, tapes, params, repeats):
    n = max(t.n for t in tapes)
    val = np.empty(n)
    adj = np.empty(n)
    grad = np.zeros_like(params)
    args = lambda t: (t.kind, t.cs, t.ce, t.child, t.pofs, t.plen, t.iarg,
                      t.jarg, t.farg, t.garg, params)
    # warm-up (jit compilation happens here, not in the timed region)
    fn_fwd(*args(tapes[0]), val[:tapes[0].n])
    fn_bwd(*args(tapes[0]), val[:tapes[0].n], adj[:tapes[0].n], 1.0, grad)

    t0 = time.perf_counter()
    total = 0.0
    for _ in range(repeats):
        for t in tapes:
            total += fn_fwd(*args(t), val[:t.n])
    fwd = (time.perf_counter() - t0) / (repeats * len(tapes))

    t0 = time.perf_counter()
    for _ in range(repeats):
        for t in tapes:
            fn_fwd(*args(t), val[:t.n])
            fn_bwd(*args(t), val[:t.n], adj[:t.n], 1.0, grad)
    bwd = (time.perf_counter() - t0) / (repeats * len(tapes))
    return fwd, bwd, total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=5)
    cli = ap.parse_args()

    schema, docs = synthetic_schema()
    model = spsn_network(schema, BuildConfig(n_l=2, n_s=3, n_p=2))
    model = init_params(model, [parse_value(d, schema) for d in docs], seed=0)
    trees = sample_trees(model, cli.trees, seed=1)
    tapes = [build_tape(model, model.roots[0], t, marginal=True) for t in trees]
    ops = sum(t.n for t in tapes) / len(tapes)
    print("model: %d units, %d params; %d tapes, %.0f ops each"
          % (len(model.units), model.params.size, len(tapes), ops))

    rows = []
    f, b, chk_np = run(K.forward_numpy, K.backward_numpy, tapes, model.params,
                       cli.repeats)
    rows.append(("numpy", f, b))
    if K.forward_numba is not None:
        f, b, chk_nb = run(K.forward_numba, K.backward_numba, tapes,
                           model.params, cli.repeats)
        rows.append(("numba", f, b))
        assert abs(chk_np - chk_nb) < 1e-6 * max(1.0, abs(chk_np))
    else:
        print("numba unavailable; timing the numpy path only")

    print("%-8s %14s %22s" % ("backend", "forward/tree", "forward+backward/tree"))
    for name, f, b in rows:
        print("%-8s %11.1f us %19.1f us" % (name, f * 1e6, b * 1e6))
    if len(rows) == 2:
        print("speedup: forward %.1fx, forward+backward %.1fx"
              % (rows[0][1] / rows[1][1], rows[0][2] / rows[1][2]))


if __name__ == "__main__":
    main()

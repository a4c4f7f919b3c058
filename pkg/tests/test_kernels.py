import os
import subprocess
import sys

import numpy as np
import pytest

from spsn import mask_missing
from spsn import kernels as K
from spsn.ground import build_tape
from spsn.oracle import random_discrete_circuit
from spsn.sample import sample_trees

needs_numba = pytest.mark.skipif(K.forward_numba is None,
                                 reason="numba unavailable")


def _tapes():
    out = []
    for seed in range(4):
        c = random_discrete_circuit(seed + 30)
        for i, tree in enumerate(sample_trees(c, 2, seed=seed)):
            t = mask_missing(tree, 0.3, seed=i)
            out.append((c, build_tape(c, c.roots[0], t, marginal=True)))
    return out


# both paths execute the identical statement sequence; the only remaining
# slack is transcendental rounding (libm vs LLVM intrinsics), about one ulp


@needs_numba
def test_backends_agree_forward():
    for c, tape in _tapes():
        val_a = np.empty(tape.n)
        val_b = np.empty(tape.n)
        a = K.forward_numpy(tape.kind, tape.cs, tape.ce, tape.child, tape.pofs,
                            tape.plen, tape.iarg, tape.jarg, tape.farg,
                            tape.garg, c.params, val_a)
        b = K.forward_numba(tape.kind, tape.cs, tape.ce, tape.child, tape.pofs,
                            tape.plen, tape.iarg, tape.jarg, tape.farg,
                            tape.garg, c.params, val_b)
        assert a == pytest.approx(b, abs=1e-13)
        np.testing.assert_allclose(val_a, val_b, rtol=1e-13, atol=1e-14)


@needs_numba
def test_backends_agree_backward():
    for c, tape in _tapes():
        val = np.empty(tape.n)
        adj = np.empty(tape.n)
        ga = np.zeros_like(c.params)
        gb = np.zeros_like(c.params)
        K.forward_numpy(tape.kind, tape.cs, tape.ce, tape.child, tape.pofs,
                        tape.plen, tape.iarg, tape.jarg, tape.farg, tape.garg,
                        c.params, val)
        K.backward_numpy(tape.kind, tape.cs, tape.ce, tape.child, tape.pofs,
                         tape.plen, tape.iarg, tape.jarg, tape.farg, tape.garg,
                         c.params, val, adj, 1.0, ga)
        K.backward_numba(tape.kind, tape.cs, tape.ce, tape.child, tape.pofs,
                         tape.plen, tape.iarg, tape.jarg, tape.farg, tape.garg,
                         c.params, val, adj, 1.0, gb)
        np.testing.assert_allclose(ga, gb, rtol=1e-12, atol=1e-14)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, SPSN_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from spsn import kernels; print(kernels.BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"


def test_numpy_backend_full_pipeline():
    # the fallback path drives the same public API
    code = (
        "import json, sys\n"
        "from spsn import *\n"
        "from spsn import kernels\n"
        "docs = [json.loads(l) for l in sys.stdin]\n"
        "schema = infer_schema(docs)\n"
        "c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))\n"
        "trees = [parse_value(d, schema) for d in docs]\n"
        "c = init_params(c, trees, seed=0)\n"
        "print(kernels.BACKEND)\n"
        "print(repr(sum(log_density(c, 0, t) for t in trees)))\n"
    )
    import json
    payload = "\n".join(json.dumps(d) for d in
                        [{"a": 1.0, "s": "x"}, {"a": 2.0, "s": "y"}])

    def run(flag):
        out = subprocess.run([sys.executable, "-c", code], input=payload,
                             capture_output=True, text=True, check=True,
                             env=dict(os.environ, SPSN_NUMBA=flag))
        backend, value = out.stdout.split()
        return backend, float(value)

    backend_np, val_np = run("numpy")
    assert backend_np == "numpy"
    backend_auto, val_auto = run("auto")
    assert val_np == pytest.approx(val_auto, abs=1e-12)
    if K.forward_numba is not None:
        assert backend_auto == "numba"

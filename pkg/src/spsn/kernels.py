"""Forward/backward kernels over evaluation tapes.

A tape is a flat, topologically ordered program produced by grounding a
circuit against one data tree (see :mod:`spsn.ground`).  The kernels
below are the package's hot loops: every density query, marginal query,
and training step runs through them.  They are written once as plain
Python over numpy arrays and JIT-compiled with numba when available.

Backend selection: the ``SPSN_NUMBA`` environment variable can be set to
``0``/``numpy`` to force the pure-numpy path or ``1``/``numba`` to
require the JIT; the default picks numba when importable.  Both paths
execute the identical statement sequence, so results are bit-equal.
"""

import math
import os

import numpy as np

OP_CONST0 = 0   # marginalized input or fully-missing subtree: log 1
OP_NEGINF = 1   # impossible evidence (cardinality beyond truncation)
OP_GAUSS = 2
OP_CAT = 3
OP_SUM = 4
OP_PROD = 5
OP_SET = 6      # observed-cardinality set combine

_HALF_LOG_2PI = 0.9189385332046727

NEG_INF = -math.inf


def _forward(kind, cs, ce, child, pofs, plen, iarg, jarg, farg, garg,
             params, val):
    n = kind.shape[0]
    for i in range(n):
        k = kind[i]
        if k == OP_CONST0:
            val[i] = 0.0
        elif k == OP_NEGINF:
            val[i] = NEG_INF
        elif k == OP_GAUSS:
            mu = params[pofs[i]]
            t = params[pofs[i] + 1]
            z = (farg[i] - mu) * math.exp(-t)
            val[i] = -0.5 * z * z - t - _HALF_LOG_2PI + garg[i]
        elif k == OP_CAT:
            o = pofs[i]
            m = params[o]
            for j in range(1, plen[i]):
                if params[o + j] > m:
                    m = params[o + j]
            s = 0.0
            for j in range(plen[i]):
                s += math.exp(params[o + j] - m)
            val[i] = params[o + iarg[i]] - (m + math.log(s))
        elif k == OP_SUM:
            o = pofs[i]
            c0 = cs[i]
            m1 = NEG_INF
            m2 = NEG_INF
            for j in range(plen[i]):
                w = params[o + j]
                a = w + val[child[c0 + j]]
                if a > m1:
                    m1 = a
                if w > m2:
                    m2 = w
            s2 = 0.0
            for j in range(plen[i]):
                s2 += math.exp(params[o + j] - m2)
            if m1 == NEG_INF:
                val[i] = NEG_INF
            else:
                s1 = 0.0
                for j in range(plen[i]):
                    s1 += math.exp(params[o + j] + val[child[c0 + j]] - m1)
                val[i] = (m1 + math.log(s1)) - (m2 + math.log(s2))
        elif k == OP_PROD:
            s = 0.0
            for j in range(cs[i], ce[i]):
                s += val[child[j]]
            val[i] = s
        else:  # OP_SET
            th = params[pofs[i]]
            kmax = jarg[i]
            mz = NEG_INF
            for kk in range(kmax + 1):
                a = kk * th - math.lgamma(kk + 1.0)
                if a > mz:
                    mz = a
            sz = 0.0
            for kk in range(kmax + 1):
                sz += math.exp(kk * th - math.lgamma(kk + 1.0) - mz)
            logz = mz + math.log(sz)
            nc = ce[i] - cs[i]
            # element terms are summed in sorted order so that any
            # permutation of the elements yields the identical float
            tmp = np.empty(nc, dtype=np.float64)
            for j in range(nc):
                tmp[j] = val[child[cs[i] + j]]
            tmp.sort()
            tot = 0.0
            for j in range(nc):
                tot += tmp[j]
            val[i] = iarg[i] * th - logz + tot
    return val[n - 1]


def _backward(kind, cs, ce, child, pofs, plen, iarg, jarg, farg, garg,
              params, val, adj, seed, grad):
    n = kind.shape[0]
    for i in range(n):
        adj[i] = 0.0
    adj[n - 1] = seed
    for i in range(n - 1, -1, -1):
        a = adj[i]
        if a == 0.0:
            continue
        k = kind[i]
        if k == OP_GAUSS:
            mu = params[pofs[i]]
            t = params[pofs[i] + 1]
            inv = math.exp(-t)
            z = (farg[i] - mu) * inv
            grad[pofs[i]] += a * z * inv
            grad[pofs[i] + 1] += a * (z * z - 1.0)
        elif k == OP_CAT:
            o = pofs[i]
            m = params[o]
            for j in range(1, plen[i]):
                if params[o + j] > m:
                    m = params[o + j]
            s = 0.0
            for j in range(plen[i]):
                s += math.exp(params[o + j] - m)
            lse = m + math.log(s)
            for j in range(plen[i]):
                p = math.exp(params[o + j] - lse)
                if j == iarg[i]:
                    grad[o + j] += a * (1.0 - p)
                else:
                    grad[o + j] -= a * p
        elif k == OP_SUM:
            if val[i] == NEG_INF:
                continue
            o = pofs[i]
            c0 = cs[i]
            m2 = NEG_INF
            for j in range(plen[i]):
                if params[o + j] > m2:
                    m2 = params[o + j]
            s2 = 0.0
            for j in range(plen[i]):
                s2 += math.exp(params[o + j] - m2)
            lse_w = m2 + math.log(s2)
            lse_a = val[i] + lse_w
            for j in range(plen[i]):
                w = params[o + j]
                v = val[child[c0 + j]]
                p = math.exp(w + v - lse_a) if v > NEG_INF else 0.0
                q = math.exp(w - lse_w)
                adj[child[c0 + j]] += a * p
                grad[o + j] += a * (p - q)
        elif k == OP_PROD:
            for j in range(cs[i], ce[i]):
                adj[child[j]] += a
        elif k == OP_SET:
            th = params[pofs[i]]
            kmax = jarg[i]
            mz = NEG_INF
            for kk in range(kmax + 1):
                x = kk * th - math.lgamma(kk + 1.0)
                if x > mz:
                    mz = x
            sz = 0.0
            ek = 0.0
            for kk in range(kmax + 1):
                w = math.exp(kk * th - math.lgamma(kk + 1.0) - mz)
                sz += w
                ek += kk * w
            ek /= sz
            grad[pofs[i]] += a * (iarg[i] - ek)
            for j in range(cs[i], ce[i]):
                adj[child[j]] += a
        # OP_CONST0 / OP_NEGINF carry no gradient


def _pick_backend():
    env = os.environ.get("SPSN_NUMBA", "auto").strip().lower()
    if env in ("0", "false", "no", "off", "numpy"):
        return "numpy"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if env in ("1", "true", "yes", "on", "numba"):
            raise RuntimeError("SPSN_NUMBA requested numba but it is not installed")
        return "numpy"


BACKEND = _pick_backend()

forward_numpy = _forward
backward_numpy = _backward

if BACKEND == "numba":
    from numba import njit

    forward_numba = njit(cache=True)(_forward)
    backward_numba = njit(cache=True)(_backward)
    forward = forward_numba
    backward = backward_numba
else:
    forward_numba = None
    backward_numba = None
    forward = forward_numpy
    backward = backward_numpy

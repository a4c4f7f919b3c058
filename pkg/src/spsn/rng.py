"""Named deterministic random sub-streams.

All randomness in the package flows from one user-facing seed through
named sub-streams, so that e.g. changing the number of training epochs
does not perturb the sampling stream.
"""

import zlib

import numpy as np


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a Generator for the sub-stream identified by ``keys``.

    Keys may be strings or integers; strings are hashed with crc32 so the
    stream is stable across processes and platforms.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            entropy.append(zlib.crc32(k.encode("utf-8")))
        else:
            entropy.append(int(k) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))

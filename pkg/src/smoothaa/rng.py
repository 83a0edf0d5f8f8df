"""
Seeded random streams.

Every stream is a numpy ``Generator`` over the counter-based Philox4x64
bit generator keyed by ``SeedSequence([seed, stream])``, so a given
``(seed, stream)`` pair yields the same numbers on every platform.
Stream ids in use: 0 instance data, 1 initial point, 99 power iteration
start vectors, 7 diagnostics sampling.
"""

import numpy as np


def make_rng(seed, stream=0):
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    ss = np.random.SeedSequence([int(seed), int(stream)])
    return np.random.Generator(np.random.Philox(ss))

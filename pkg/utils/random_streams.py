"""
Seedable, splittable random streams.

Every stream is a PCG64 generator keyed by (seed, *keys), so sequence i of a
dataset gets the same draws no matter which worker produces it.
"""

import numpy as np

# Split codes for derive_rng keys
SPLIT_TRAIN = 0
SPLIT_VAL = 1
STREAM_VALIDATION = 2 ** 31 - 1


def derive_rng(seed, *keys):
    """Return an independent generator for the stream named by (seed, *keys)."""
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(v < 0 for v in entropy):
        raise ValueError(f"Seeds and stream keys must be non-negative: {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

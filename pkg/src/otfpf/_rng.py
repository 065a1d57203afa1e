"""Keyed random streams.

Every random draw in the package comes from a Philox (counter-based)
generator whose key is derived from ``(master_seed, *key)``. Two calls
with the same key produce the same numbers no matter how work is
scheduled, which is what makes trial-level parallelism reproducible.
"""

import numpy as np

# stream identifiers
INITIAL_STATE = 0
PROCESS_NOISE = 1
OBSERVATION_NOISE = 2
PARTICLES = 3
PARTICLE_NOISE = 4
TRIAL = 5


def stream(seed, *key):
    """Return an independent generator for ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Master seed, interpreted as an unsigned 64-bit integer.
    *key : int
        Non-negative integers naming the sub-stream.
    """
    entropy = [int(seed) % (1 << 64)] + [int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

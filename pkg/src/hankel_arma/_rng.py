"""Counter-based random streams.

Every draw in the package goes through :func:`stream`, which keys a Philox
generator by ``(seed, stream_id)``.  Replicate ``k`` of a Monte Carlo run
always sees the same numbers no matter which worker evaluates it.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, stream_id=0):
    """Return a ``numpy.random.Generator`` for the pair ``(seed, stream_id)``."""
    seed = int(seed)
    stream_id = int(stream_id)
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    key = (seed & _MASK64) | ((stream_id & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))

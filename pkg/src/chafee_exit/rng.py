"""Reproducible random streams.

Every trajectory gets its own Philox generator keyed by the pair
``(master_seed, stream_id)``: the 128-bit Philox key is
``master_seed * 2**64 + stream_id``, the counter starts at zero.  Streams are
therefore independent of the order in which paths are scheduled, and of the
number of workers.
"""

import numpy as np

_MASK = (1 << 64) - 1


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    if not 0 <= master_seed <= _MASK or not 0 <= stream_id <= _MASK:
        raise ValueError("master_seed and stream_id must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=(int(master_seed) << 64) | int(stream_id)))

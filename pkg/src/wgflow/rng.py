"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, index)``: the Philox key is built
from the seed and a stream id, the counter from the index. Particle ``i``
therefore sees the same numbers no matter how many particles are generated,
and no generator state is shared between threads or runs.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream ids
INITIAL = 0
PERTURBATION = 1
DIRECTION = 2


def generator(seed: int, stream: int, index: int) -> np.random.Generator:
    key = (int(seed) & MASK64) | ((int(stream) & MASK64) << 64)
    # upper 128 counter bits hold the index, lower bits advance with draws
    counter = (int(index) & MASK64) << 128
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, stream: int, index: int, size: int) -> np.ndarray:
    return generator(seed, stream, index).standard_normal(size)


def uniforms(seed: int, stream: int, index: int, size: int) -> np.ndarray:
    return generator(seed, stream, index).random(size)


def normal_block(seed: int, stream: int, start: int, count: int, dim: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of an endless standard-normal table."""
    out = np.empty((count, dim))
    for k in range(count):
        out[k] = normals(seed, stream, start + k, dim)
    return out

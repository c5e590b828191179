"""Counter-based per-path random streams.

Path ``k`` of a run with master seed ``s`` owns four independent streams
(chain, Lévy jumps, impulses, Brownian). Each is a Philox generator keyed
by hashing ``(s, k, stream)`` through :class:`numpy.random.SeedSequence`,
so any subset of paths can be regenerated in any order, by any worker,
with identical results.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator


class Stream(IntEnum):
    CHAIN = 0
    LEVY_JUMPS = 1
    IMPULSE = 2
    BROWNIAN = 3


def stream_seed(master_seed: int, path_id: int, stream: Stream) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(int(path_id), int(stream)),
    )


def path_generator(master_seed: int, path_id: int, stream: Stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(stream_seed(master_seed, path_id, stream)))


def as_generator(seed: SeedLike, stream: Stream, path_id: int = 0) -> np.random.Generator:
    """Turn a user seed into the generator for one stream.

    Integers are a master seed: ``as_generator(s, stream, k)`` is the stream
    that path ``k`` of a run with master seed ``s`` uses. Generators are
    passed through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        child = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (int(stream),))
        return np.random.Generator(np.random.Philox(child))
    return path_generator(int(seed), path_id, stream)

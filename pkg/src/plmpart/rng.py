"""Counter-based random substreams.

Every random draw in the package comes from a Philox4x64 generator whose key
is derived from a master seed plus an integer path such as
``(STREAM_REPLICATE, r)``. Replicate ``r`` therefore sees the same numbers
whether it runs alone, in a batch, or on another worker.
"""

from __future__ import annotations

import numpy as np

# stream tags keep unrelated uses of the same master seed apart
STREAM_DATA = 1
STREAM_T1_BOOT = 2
STREAM_T2_BOOT = 3
STREAM_TEST_SEED = 4


def derive_key(seed: int, *path: int) -> int:
    """Hash ``(seed, *path)`` into a single 64-bit stream key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *path)))


def indexed(key: int, index: int) -> np.random.Generator:
    """Generator number ``index`` under an already derived stream key.

    Cheaper than :func:`substream` inside bootstrap loops: the Philox key is
    the pair ``(key, index)`` directly.
    """
    return np.random.Generator(
        np.random.Philox(key=np.array([key, index], dtype=np.uint64))
    )

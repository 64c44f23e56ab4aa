"""Reproducible, independent random streams keyed by ``(master_seed, *stream_id)``.

Streams are numpy ``Philox`` generators (counter-based); the 128-bit key is
derived with ``SeedSequence`` so distinct ids give statistically independent
streams and the same id always replays the same sequence.
"""
from __future__ import annotations

import numpy as np

# stream-id namespaces, so ids built by different callers never collide
FORWARD = 0
BACKWARD = 1
BOOTSTRAP = 2
SIMULATE = 3
SEEDS = 4


def stream(master_seed: int, *stream_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(i) for i in stream_id))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

"""Named, counter-based random streams derived from one master seed.

Each stream is keyed by (name, *counters), e.g. ("measurement", frame,
window, step).  Turning one subsystem on or off never shifts the draws of
another, and the draw for a given key does not depend on execution order.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "truth-generation": 0,
    "truth-drift": 1,
    "measurement": 2,
    "particle-init": 3,
    "rejuvenation": 4,
    "strain": 5,
}


def stream(seed: int, name: str, *counters: int) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    if any(c < 0 for c in counters):
        raise ValueError("stream counters must be non-negative")
    key = (STREAMS[name],) + tuple(int(c) for c in counters)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))

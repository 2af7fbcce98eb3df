"""Seed splitting.

Every random purpose gets its own stream ``SeedSequence([seed, stream_id])``
so changing how one purpose consumes randomness never shifts another.
"""

import numpy as np

STREAMS = {
    "init": 0,
    "data0": 1,
    "data1": 2,
    "time": 3,
    "noise": 4,
    "dequant": 5,
    "coupling": 6,
    "hutchinson": 7,
    "eval": 8,
    "cli": 9,
}


def stream(seed, purpose):
    try:
        sid = STREAMS[purpose]
    except KeyError:
        raise KeyError(f"unknown rng stream {purpose!r}") from None
    return np.random.default_rng(np.random.SeedSequence([int(seed), sid]))


def streams(seed):
    return {name: stream(seed, name) for name in STREAMS}

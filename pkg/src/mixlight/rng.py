"""Seeded random-stream derivation.

All randomness in the package flows from a single integer seed through named
sub-streams, so that pipeline components (scene synthesis, adjustment draws,
weight init, batch shuffling) stay independently reproducible.
"""

import numpy as np

# Fixed stream ids; order must never change or every corpus rebuild shifts.
_STREAMS = {
    "scene": 0,
    "adjust": 1,
    "init": 2,
    "shuffle": 3,
    "baseline": 4,
    "context": 5,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return the generator for a named sub-stream of ``seed``.

    ``extra`` integers (epoch index, clip index, ...) further split a stream.
    """
    if name not in _STREAMS:
        raise KeyError(f"unknown rng stream {name!r}")
    return np.random.default_rng([int(seed), _STREAMS[name], *[int(e) for e in extra]])

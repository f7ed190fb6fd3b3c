"""Named, counter-based random streams.

Every stochastic component takes a ``numpy.random.Generator`` built here. The
bit generator is Philox (counter-based), so a (seed, stream) pair identifies a
reproducible sequence independent of how other streams are consumed.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "philox"

# Fixed stream identifiers; kept stable so saved results stay reproducible.
STREAMS = {
    "channel": 1,
    "transport": 2,
    "policy": 3,
    "init": 4,
    "minibatch": 5,
    "eval_channel": 6,
    "eval_transport": 7,
    "map": 8,
    "sweep": 9,
}


def make_rng(seed=None, stream: str | int = 0, algorithm: str = RNG_ALGORITHM) -> np.random.Generator:
    if algorithm != RNG_ALGORITHM:
        raise ValueError(f"unsupported rng algorithm {algorithm!r}")
    stream_id = STREAMS[stream] if isinstance(stream, str) else int(stream)
    if seed is None:
        seed = 0
    return np.random.Generator(np.random.Philox(key=[int(seed), stream_id]))

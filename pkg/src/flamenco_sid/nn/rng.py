"""Named, seeded random generators.

All stochastic ops draw from a generator obtained here, so one call to
:func:`manual_seed` fixes every draw of a run. Each name gets its own
stream, derived from the seed and a CRC of the name.
"""

from __future__ import annotations

import zlib

import numpy as np

_state = {"seed": 0, "streams": {}}


def manual_seed(seed: int) -> None:
    _state["seed"] = int(seed)
    _state["streams"] = {}


def current_seed() -> int:
    return _state["seed"]


def generator(name: str) -> np.random.Generator:
    streams = _state["streams"]
    if name not in streams:
        streams[name] = np.random.default_rng([_state["seed"], zlib.crc32(name.encode())])
    return streams[name]

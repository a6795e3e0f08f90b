"""Counter-style random substreams keyed by (seed, purpose, index...)."""

from __future__ import annotations

import numpy as np

INITIAL = 0
NOISE = 1
BRIDGE = 2
SUBSAMPLE = 3
PROBES = 4


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator determined only by ``seed`` and ``keys``.

    Streams do not depend on how many other streams were drawn before, so any
    worker can regenerate the noise of step k without touching steps < k.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))

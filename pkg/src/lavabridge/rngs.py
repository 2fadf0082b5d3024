"""Named, counter-split random substreams.

Every run derives all of its randomness from one master seed through fixed
per-purpose spawn keys, so e.g. adding evaluation checkpoints can never
perturb the training stream. Streams are PCG64 generators.
"""

from __future__ import annotations

import numpy as np

# Stable stream ids; appending new names is safe, renumbering is not.
_STREAM_IDS = {
    "env": 1,
    "sampler": 2,
    "learner-init": 3,
    "learner-noise": 4,
    "eval": 5,
    "demo": 6,
}


def substream(master_seed: int, name: str, index: int | None = None) -> np.random.Generator:
    """Generator for stream ``name`` (optionally sub-indexed, e.g. per eval checkpoint)."""
    try:
        sid = _STREAM_IDS[name]
    except KeyError:
        raise ValueError(f"unknown stream {name!r}; known: {sorted(_STREAM_IDS)}") from None
    key = (sid,) if index is None else (sid, int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=key)))

"""Named, reproducible random substreams.

Every source of randomness in the package (goal sampling, network init,
action sampling, ...) draws from a substream derived from one master seed
and a string label, so a single run can be replayed component by component.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "substream_seed"]


def _label_key(label: str) -> int:
    # crc32 is stable across platforms and Python versions, unlike hash().
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for the (seed, label) substream. Same inputs, same stream."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(_label_key(label),))
    return np.random.Generator(np.random.PCG64(seq))


def substream_seed(seed: int, label: str) -> int:
    """A derived 63-bit seed, for components that want an int instead of a Generator."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(_label_key(label),))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)

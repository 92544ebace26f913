"""Labelled, platform-stable random streams.

Every random draw in the package comes from a generator derived from one
integer root seed plus a path of labels, e.g. ``stream(seed, "tree", 17)``.
Streams with different label paths are statistically independent, and the
same path always yields the same stream, whatever order (or thread) the
streams are created in.
"""

import hashlib

import numpy as np

__all__ = ["derive_seed", "stream"]

_MASK64 = (1 << 64) - 1


def _label_words(labels):
    words = []
    for label in labels:
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            words.append(int(label) & _MASK64)
        else:
            digest = hashlib.sha256(str(label).encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "little"))
    return words


def _seed_sequence(root, labels):
    if root is None:
        raise ValueError("a root seed is required; ambient entropy is never used")
    return np.random.SeedSequence([int(root) & _MASK64, *_label_words(labels)])


def derive_seed(root, *labels):
    """Return a 63-bit integer seed derived from ``root`` and ``labels``."""
    state = _seed_sequence(root, labels).generate_state(1, dtype=np.uint64)
    return int(state[0]) >> 1


def stream(root, *labels):
    """Return a PCG64 generator for the label path ``labels`` under ``root``."""
    return np.random.Generator(np.random.PCG64(_seed_sequence(root, labels)))

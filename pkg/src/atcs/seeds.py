"""Deterministic derivation of named random substreams from one master seed.

Every stochastic component (splitting, sensing patterns, clustering,
forests, evolutionary search) draws from its own named substream so that
runs reproduce bit-for-bit regardless of call order or scheduling.
"""

import hashlib

import numpy as np


def subseed(master: int, *labels) -> int:
    """Stable 64-bit seed for the substream named by ``labels``."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")


def substream(master: int, *labels) -> np.random.Generator:
    """Fresh numpy Generator for the substream named by ``labels``."""
    return np.random.default_rng(subseed(master, *labels))

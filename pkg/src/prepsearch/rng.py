"""Deterministic seed derivation for labeled PRNG substreams.

Every random draw in the package flows from one root seed. Components derive
independent substreams by hashing the root seed together with a label path
(component name, position, candidate id, sample index, ...). Hashing is done
with sha256 so streams are stable across platforms and interpreter runs, and
per-sample-index streams make results independent of evaluation order and
worker count.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(root_seed: int, *labels: object) -> int:
    """Derive a stable 128-bit integer seed for the substream named by labels."""
    h = hashlib.sha256()
    h.update(repr(int(root_seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest()[:16], "big")


def substream(root_seed: int, *labels: object) -> np.random.Generator:
    """PRNG whose stream depends only on (root_seed, labels)."""
    return np.random.default_rng(substream_seed(root_seed, *labels))

"""Deterministic seed derivation.

A single master seed fans out into one labeled sub-seed per pipeline
component (split, preprocess, encoder, classifier, tuner, ...) via SHA-256,
so reruns are bit-reproducible and no two components share an RNG stream.
The same mechanism splits per-candidate, per-generation substreams for the
evolutionary tuner, which keeps results independent of evaluation order.
"""

import hashlib

import numpy as np


def derive_seed(master: int, label: str) -> int:
    """Map (master seed, component label) to a stable 64-bit sub-seed."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master: int, label: str) -> np.random.Generator:
    """Independent generator for one labeled component of a run."""
    return np.random.default_rng(derive_seed(master, label))

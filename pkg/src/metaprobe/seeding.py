"""Deterministic seed derivation.

All randomness in a run flows from one base seed. Sub-streams (shuffle,
init, subsample, per-portion, per-cell) are derived by name so that
partial re-runs of a manifest stay consistent with the full run.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, *tags) -> int:
    """Derive a child seed from ``base_seed`` and a tuple of tags.

    Tags may be strings or integers. The derivation is stable across
    processes and platforms (CRC32 of the tag bytes feeds a SeedSequence).
    """
    words = [int(base_seed) & _MASK64]
    for tag in tags:
        if isinstance(tag, str):
            words.append(zlib.crc32(tag.encode("utf-8")))
        else:
            words.append(int(tag) & _MASK64)
    seq = np.random.SeedSequence(words)
    return int(seq.generate_state(1, np.uint64)[0])


def rng_for(base_seed: int, *tags) -> np.random.Generator:
    """A fresh PCG64 generator for the named sub-stream."""
    return np.random.default_rng(derive_seed(base_seed, *tags))

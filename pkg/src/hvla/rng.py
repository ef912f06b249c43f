"""Seeding helpers.

All randomness goes through :func:`make_rng`, which wraps numpy's Philox
counter-based bit generator.  Sub-seeds are derived with a SplitMix64
finaliser so that per-item seeds do not depend on generation order::

    derive_seed(master, "clip", 17)  # same value on every worker
"""

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def mix64(x: int) -> int:
    """SplitMix64 finaliser: a bijective avalanche mix of a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *keys) -> int:
    """Fold ``keys`` (ints or strings) into ``master`` one at a time."""
    s = mix64(int(master) & _MASK)
    for k in keys:
        s = mix64(s ^ _key_int(k))
    return s


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK))

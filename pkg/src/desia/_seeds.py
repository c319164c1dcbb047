"""Deterministic seed derivation.

All randomness in the package flows through named streams derived from a
master seed, so that runs are reproducible regardless of execution order
or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_entropy(*parts: object) -> list[int]:
    """Hash a tuple of labels/ints into 128 bits of SeedSequence entropy."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    d = h.digest()
    return [int.from_bytes(d[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(*parts: object) -> np.random.SeedSequence:
    return np.random.SeedSequence(derive_entropy(*parts))


def derive_rng(*parts: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(*parts)))


def derive_seed(*parts: object) -> int:
    """A 63-bit integer seed, for APIs that take a plain int."""
    return int(seed_sequence(*parts).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)

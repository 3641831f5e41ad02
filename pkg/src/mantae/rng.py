"""Seeded random streams.

All randomness in the package goes through :func:`make_rng`, which wraps
numpy's Philox-4x64 counter-based bit generator keyed by a 64-bit seed.
Sub-streams for independent consumers (repeats, restarts, data vs. model)
are derived with :func:`derive_seed` so that results never depend on the
order in which consumers draw.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


def derive_seed(seed, *labels):
    """Deterministically mix ``seed`` with string/int labels into a new 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & SEED_MASK).to_bytes(8, "little"))
    for label in labels:
        h.update(b"\x00")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")

"""Seed derivation.

A single master seed drives every random decision in an experiment.
Purpose-specific seeds are split off deterministically by hashing the
master seed together with a short purpose tag and any integer indices
(round number, client id, ...):

    seed = sha256("<master>:<tag>[:<idx>...]") mod 2**63

The same (master, tag, indices) triple always yields the same seed, and
distinct purposes never share an RNG stream.
"""

import hashlib

import numpy as np


def derive_seed(master: int, tag: str, *indices: int) -> int:
    """Derive a child seed from the master seed, a tag, and indices."""
    parts = [str(int(master)), tag] + [str(int(i)) for i in indices]
    digest = hashlib.sha256(":".join(parts).encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def rng_for(master: int, tag: str, *indices: int) -> np.random.Generator:
    """PCG64 generator seeded via :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, tag, *indices)))

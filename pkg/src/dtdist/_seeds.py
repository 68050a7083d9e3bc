"""Deterministic derivation of named RNG streams from a single 64-bit seed.

Every source of randomness in the package is a numpy Generator obtained
from `stream(root_seed, *path)`.  The path is a sequence of strings or
integers naming the purpose ("leaf-pool", trial index, worker index, ...),
so independent components never share or race a stream.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *path) -> int:
    """Stable 64-bit child seed from a root seed and a purpose path."""
    h = hashlib.blake2b(digest_size=8)
    h.update((int(root) & _MASK64).to_bytes(8, "little"))
    for part in path:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def stream(root: int, *path) -> np.random.Generator:
    """Named, reproducible random stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *path)))

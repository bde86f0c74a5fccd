"""
[Internal use only] Counter-based random streams.

Every stream is addressed by (seed, label, step, coordinate); the value for
particle `i` is the `i`-th draw of that stream, so results never depend on
the order in which streams are consumed or on the number of worker threads.
"""

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_HALF_ULP = 0.5 / float(1 << 53)


def derive_seed(seed: int, label: str) -> int:
    """Labeled 64-bit seed derivation (stable across platforms and runs)."""
    digest = hashlib.blake2b('{}|{}'.format(int(seed) & _MASK64, label).encode('utf-8'), digest_size=8)
    return int.from_bytes(digest.digest(), 'little')


def generator(seed: int, label: str, step: int = 0, coordinate: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, derive_seed(seed, label)], dtype=np.uint64)
    counter = np.array([0, int(step) & _MASK64, int(coordinate) & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def uniforms(seed: int, label: str, step: int, coordinate: int, n: int) -> np.ndarray:
    """`n` uniforms in the open interval (0, 1); draw `i` belongs to particle `i`."""
    raw = generator(seed, label, step, coordinate).random(n)
    return np.floor(raw * float(1 << 53)) / float(1 << 53) + _HALF_ULP


def normals(seed: int, label: str, step: int, coordinate: int, n: int) -> np.ndarray:
    """Standard normals by inversion, one per particle (prefix-stable in `n`)."""
    return ndtri(uniforms(seed, label, step, coordinate, n))


def permutation(seed: int, label: str, n: int) -> np.ndarray:
    return generator(seed, label).permutation(n)

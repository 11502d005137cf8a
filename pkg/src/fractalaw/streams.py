"""Address-keyed counter-based random streams.

Every node ``sigma`` of every construction tree gets its own 64-bit key,
derived from ``(seed, tree index, sigma)`` with the SplitMix64 finaliser
(Steele, Lea & Flood 2014).  Draw ``j`` of a stream is
``mix(key + (j + 1) * GOLDEN)``, i.e. SplitMix64 seeded with the key.  Keys
and draws are plain uint64 arithmetic, so whole tree levels are derived with
numpy in one shot and the results do not depend on evaluation order.

Tree letters are 1-based (``sigma`` is a word over ``{1, ..., N}``).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LETTER = np.uint64(0xD1B54A32D192ED03)
_INDEX = np.uint64(0x8CB92BA72F3D8DD7)
_SEED = np.uint64(0x2545F4914F6CDD1D)
_MASK = (1 << 64) - 1


def mix64(z) -> np.ndarray:
    """SplitMix64 output function, vectorised over uint64 arrays."""
    z = np.array(z, dtype=np.uint64, copy=True, ndmin=1)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def to_unit(bits: np.ndarray) -> np.ndarray:
    """Top 53 bits as a double in [0, 1)."""
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def root_keys(seed: int, indices) -> np.ndarray:
    s = mix64(np.uint64(int(seed) & _MASK) ^ _SEED)
    idx = np.asarray(indices, dtype=np.uint64).reshape(-1)
    return mix64(s ^ mix64((idx + np.uint64(1)) * _INDEX))


def child_keys(keys: np.ndarray, N: int) -> np.ndarray:
    """Keys of the ``N`` children of each key, parent-major."""
    letters = np.arange(1, N + 1, dtype=np.uint64) * _LETTER
    return mix64((keys[:, None] ^ letters[None, :]).reshape(-1))


def address_key(seed: int, index: int, sigma: Sequence[int]) -> np.uint64:
    k = root_keys(seed, [index])
    for letter in sigma:
        if letter < 1:
            raise ValueError("tree letters are 1-based")
        k = mix64(k ^ (np.array([letter], dtype=np.uint64) * _LETTER))
    return k[0]


def uniforms(keys: np.ndarray, n: int, start: int = 0) -> np.ndarray:
    """Draws ``start .. start+n-1`` of each stream, shape ``(len(keys), n)``."""
    j = np.arange(start + 1, start + n + 1, dtype=np.uint64) * GOLDEN
    return to_unit(mix64((keys.reshape(-1, 1) + j[None, :]).reshape(-1))).reshape(-1, n)


class RngStream:
    """A stream of doubles in [0, 1) fixed by ``(seed, index, sigma)``."""

    def __init__(self, key):
        self.key = np.uint64(key)
        self.counter = 0

    def random(self, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape)) if shape else 1
        out = uniforms(np.array([self.key]), n, self.counter)[0]
        self.counter += n
        return float(out[0]) if size is None else out.reshape(shape)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        j = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64) * GOLDEN
        self.counter += n
        return mix64(self.key + j)

    def __repr__(self):
        return f"RngStream(key=0x{int(self.key):016x}, counter={self.counter})"


def derive_stream(seed: int, index: int, sigma: Sequence[int] = ()) -> RngStream:
    return RngStream(address_key(seed, index, sigma))


def subseed(seed: int, label: int) -> int:
    """A derived master seed, for experiments that need several independent forests."""
    return int(mix64(np.uint64(int(seed) & _MASK) ^ mix64(np.array([label], dtype=np.uint64) + GOLDEN))[0])

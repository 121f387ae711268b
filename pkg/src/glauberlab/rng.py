"""Counter-based random streams.

Every draw is a pure function of an integer key tuple, e.g.
``(seed, chain, step, slot)`` or ``(seed, p, i1, ..., ip)``, so results do not
depend on evaluation order, batching, or how work is split across chains.
The mixer is SplitMix64's finalizer applied along the key.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = float(2**53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z + _GOLDEN)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_words(k) -> np.ndarray:
    a = np.asarray(k)
    if a.dtype.kind not in "iu":
        raise TypeError(f"keys must be integers, got {a.dtype}")
    return a.astype(np.uint64)


def hash_keys(*keys) -> np.ndarray:
    """Hash broadcastable integer key arrays to uint64 words."""
    arrs = np.broadcast_arrays(*[_as_words(k) for k in keys])
    h = np.zeros(arrs[0].shape, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for a in arrs:
            h = _mix(h ^ a)
        h = _mix(h)
    return h


def uniform(*keys) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1), one per key."""
    h = hash_keys(*keys)
    return ((h >> _S11).astype(np.float64) + 0.5) / _TWO53


def normal(*keys) -> np.ndarray:
    """Standard normal draws by inverse CDF of :func:`uniform`."""
    return ndtri(uniform(*keys))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed derived from a key tuple."""
    return int(hash_keys(*keys)[()] >> np.uint64(1))

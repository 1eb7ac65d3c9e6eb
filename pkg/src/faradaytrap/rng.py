"""Counter-based random streams.

A stream is a 64-bit key; the n-th draw is a pure function of (key, n), so
results do not depend on evaluation order or on how work is split. Keys are
derived from a root seed and a text label, which lets new outputs claim new
labels without perturbing existing ones.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def _mix_int(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def stream_key(seed: int, *labels) -> int:
    """64-bit key for the substream ``labels`` of root ``seed``.

    Labels may be strings or integers.
    """
    key = _mix_int(int(seed) & _MASK)
    for label in labels:
        if isinstance(label, str):
            h = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
        else:
            h = int(label) & _MASK
        key = _mix_int(key ^ h)
    return key


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def uniform(key: int, counters) -> np.ndarray:
    """Uniform doubles in [0, 1) for each counter value."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix_array(np.uint64(key) ^ _mix_array(c))
    return (bits >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def normal(key: int, counters) -> np.ndarray:
    """Standard normal draws (Box-Muller over two interleaved counters)."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniform(key, 2 * c)
    u2 = uniform(key, 2 * c + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


@nb.njit(cache=True)
def mix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


@nb.njit(cache=True)
def uniform_nb(key, counter):
    return float(mix(key ^ mix(counter)) >> np.uint64(11)) * _TO_UNIT

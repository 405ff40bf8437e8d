"""Counter-keyed random numbers.

Every random quantity in the package is a pure function of a 64-bit seed and
an integer key (a domain tag plus two coordinates).  Nothing carries state, so
two computations that ask for the same key get the same bits, no matter the
order or the thread they run on.  The construction chains the SplitMix64
finalizer over the key words.
"""

from __future__ import annotations

import zlib

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53_INV = 1.0 / 9007199254740992.0

# domain tags keep the weight field and the clocks independent for one seed
TAG_WEIGHT = 1
TAG_CLOCK = 2
TAG_AUX = 3


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def hash_key(seed, tag, a, b):
    h = mix64(np.uint64(seed) ^ mix64(np.uint64(tag) + _GOLDEN))
    h = mix64(h ^ mix64(np.uint64(a) + _GOLDEN * np.uint64(2)))
    return mix64(h ^ mix64(np.uint64(b) + _GOLDEN * np.uint64(3)))


@njit(inline="always")
def uniform_open(h):
    """Map 64 random bits to a double in the open interval (0, 1)."""
    return (np.float64(h >> _S11) + 0.5) * _TWO53_INV


@njit(inline="always")
def exp1(seed, tag, a, b):
    """Exponential(1) variate keyed by (seed, tag, a, b), by inverse CDF."""
    return -np.log1p(-uniform_open(hash_key(seed, tag, a, b)))


@njit(cache=True)
def exp1_grid(seed, tag, a, b):
    out = np.empty(a.shape[0], dtype=np.float64)
    for i in range(a.shape[0]):
        out[i] = exp1(seed, tag, a[i], b[i])
    return out


# -- pure-Python twin, used by the tests as an independent reference -------


def _mix64_py(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash_key_py(seed: int, tag: int, a: int, b: int) -> int:
    g = 0x9E3779B97F4A7C15
    h = _mix64_py((seed & MASK64) ^ _mix64_py(tag + g))
    h = _mix64_py(h ^ _mix64_py((a & MASK64) + 2 * g))
    return _mix64_py(h ^ _mix64_py((b & MASK64) + 3 * g))


def as_seed(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


def derive_seed(seed: int, *path: int | str) -> int:
    """Sub-seed for a named sub-task, e.g. ``derive_seed(7, "coalesce", 12)``.

    Strings are folded with CRC32 so the derivation does not depend on
    Python's salted ``hash``.
    """
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode()))
        else:
            words.append(int(p) & 0xFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)
    return int(state[0])

"""Counter-based random streams (SplitMix64) usable inside compiled kernels.

One run owns a single seed. Stream ``i`` is the seed mixed with a fixed
per-stream offset, so node ``n`` draws the same sequence regardless of how
many other nodes or switches exist.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# stream id domains
SWITCH_STREAM_BASE = 1 << 32


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def next_u64(state, i):
    s = state[i] + _GOLDEN
    state[i] = s
    z = (s ^ (s >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def next_float(state, i):
    """Uniform double in [0, 1)."""
    return np.float64(next_u64(state, i) >> _S11) * _INV53


@njit(cache=True, inline="always")
def next_below(state, i, n):
    """Uniform integer in ``[0, n)``."""
    return min(int(next_float(state, i) * n), n - 1)


@njit(cache=True, inline="always")
def next_exponential(state, i, mean):
    return -mean * np.log1p(-next_float(state, i))


def seed_streams(seed: int, stream_ids) -> np.ndarray:
    """Initial states for the given stream ids under one run seed."""
    ids = np.asarray(stream_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)[0]
        return _mix(base ^ (ids * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))


class Stream:
    """A single stream, for use outside kernels (tests, role assignment)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.state = seed_streams(seed, [stream_id])

    def uniform(self) -> float:
        return next_float(self.state, 0)

    def below(self, n: int) -> int:
        return next_below(self.state, 0, n)

    def exponential(self, mean: float) -> float:
        return next_exponential(self.state, 0, mean)

"""Counter-based random streams.

A uniform variate is a pure function of ``(seed, stream, replicate, counter)``,
so any replicate can be regenerated in isolation and results never depend on
how replicates are batched or scheduled across workers.  The mixing function
is the SplitMix64 finalizer.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_REP = np.uint64(0xD1B54A32D192ED03)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    """Derive the 64-bit key of substream ``stream`` under master ``seed``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative 64-bit integer")
    k = _mix_int(seed + 0x9E3779B97F4A7C15)
    return _mix_int(k ^ ((stream * 0x9E3779B97F4A7C15 + 0x632BE59BD9B4E019) & _MASK64))


class CounterStream:
    """Random-access uniform variates for one (seed, stream) pair.

    >>> s = CounterStream(7, 0)
    >>> bool(s.uniform(3, 10) == s.uniform([3], [10])[0])
    True
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = stream_key(self.seed, self.stream)

    def _bits(self, replicate, counter):
        rep = np.asarray(replicate, dtype=np.uint64)
        ctr = np.asarray(counter, dtype=np.uint64)
        with np.errstate(over="ignore"):
            base = _mix(np.uint64(self.key) ^ (rep * _REP))
            return _mix(base + (ctr + np.uint64(1)) * _GAMMA)

    def uniform(self, replicate, counter):
        """Uniform variates on [0, 1) indexed elementwise by replicate and counter."""
        bits = self._bits(replicate, counter)
        out = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return out[()] if out.ndim == 0 else out

    def block(self, replicate: int, start: int, size: int) -> np.ndarray:
        """``size`` consecutive variates of one replicate starting at ``start``."""
        ctr = np.arange(start, start + size, dtype=np.uint64)
        return self.uniform(np.full(size, replicate, dtype=np.uint64), ctr)

    def child(self, stream: int) -> "CounterStream":
        """A stream keyed by this stream's seed and a combined stream id."""
        return CounterStream(self.seed, _mix_int(self.stream * 0x100000001B3 + stream))


def derive_stream(*parts: int) -> int:
    """Stable 63-bit stream id from a tuple of integers."""
    z = 0x51F15E
    for p in parts:
        z = _mix_int(z ^ ((int(p) * 0x9E3779B97F4A7C15) & _MASK64))
    return z >> 1

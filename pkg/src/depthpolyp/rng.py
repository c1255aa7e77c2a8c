"""Counter-based pseudorandom streams for the degradation pipeline.

Each stream is keyed by (seed, sample_index, operator_index) and mixed
down to a 64-bit state with splitmix64 finalizers, so any stream can be
constructed and consumed independently of every other: the same key
yields the same draws no matter in which order, process or thread the
samples are handled.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class KeyedRng:
    """splitmix64 sequence seeded from a three-part key."""

    __slots__ = ("state",)

    def __init__(self, seed, sample_index=0, op_index=0):
        s = _mix(seed * 0xA24BAED4963EE407 + 1)
        s = _mix(s ^ (sample_index * 0x9FB21C651E98DF25 + 1))
        self.state = _mix(s ^ (op_index * 0xD6E8FEB86659FD93 + 1))

    def next_u64(self):
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix(self.state)

    def uniform(self, low=0.0, high=1.0):
        """Uniform float in [low, high) with 53-bit resolution."""
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return low + (high - low) * u

    def randint(self, low, high):
        """Uniform integer in [low, high] inclusive."""
        if high < low:
            raise ValueError(f"empty integer range [{low},{high}]")
        return low + self.next_u64() % (high - low + 1)

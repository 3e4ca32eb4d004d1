"""Counter-based pseudo-random generator used for all synthetic fixtures.

The generator is SplitMix64 driven by an explicit counter, so the i-th
output is a pure function of (seed, i):

    u64(seed, i) = mix64(seed + i * 0x9E3779B97F4A7C15)   for i = 1, 2, ...

where mix64 is the SplitMix64 finalizer:

    z  = x
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D4ECE84EB0B95D
    z ^= z >> 31

all in 64-bit wrapping arithmetic. Floats in [0, 1) take the top 24 bits:
f32(u) = (u >> 40) * 2**-24, which every float32 represents exactly.
Integers in [lo, hi] use the remainder of the full 64-bit word, whose bias
is negligible for the small ranges used here.

Any implementation in any language that follows the three rules above
reproduces fixture streams bit-exactly.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D4ECE84EB0B95D


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z = x & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Fold integer tags into a seed to get an independent child stream.

    derive_seed(s, t1, t2) = mix64(mix64(s + GOLDEN) ^ t1 ...) applied
    left to right; documented so other implementations can mirror it.
    """
    z = mix64((seed + _GOLDEN) & _MASK)
    for t in tags:
        z = mix64((z ^ (t & _MASK)) & _MASK)
    return z


class CounterRng:
    """Sequential view over the counter-based stream for one seed."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._i = 0

    def next_u64(self) -> int:
        self._i += 1
        return mix64((self.seed + self._i * _GOLDEN) & _MASK)

    def next_f32(self) -> float:
        """One float32-exact uniform value in [0, 1)."""
        return float(np.float32((self.next_u64() >> 40) * 2.0**-24))

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def fill_f32(self, count: int) -> np.ndarray:
        """Vectorized next_f32 x count; identical values to a scalar loop."""
        if count == 0:
            return np.zeros(0, np.float32)
        idx = np.arange(self._i + 1, self._i + count + 1, dtype=np.uint64)
        self._i += count
        with np.errstate(over="ignore"):
            z = (np.uint64(self.seed) + idx * np.uint64(_GOLDEN))
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        return ((z >> np.uint64(40)).astype(np.float64) * 2.0**-24).astype(np.float32)

    def fork(self, *tags: int) -> "CounterRng":
        """Independent child stream keyed by integer tags."""
        return CounterRng(derive_seed(self.seed, *tags))

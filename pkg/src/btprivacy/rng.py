"""Pinned 64-bit generator shared by every component that needs randomness.

The generator is a SplitMix-style counter mixer.  It is pinned bit for bit so
that a run of the simulator can be reproduced exactly from a seed in any
implementation of this tool, and so that pseudonym derivation and trace-store
hashing produce identical values everywhere.  It is NOT a cryptographic
primitive; see ``btprivacy.csi`` for where that matters.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(state: int) -> int:
    """One generator step starting from ``state``: advance, then scramble.

    This is the single pinned mixing function.  Pseudonyms and hashed trace
    ids are defined directly in terms of it.
    """
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Deterministic stream of 64-bit words seeded with a single integer.

    Two instances with equal seeds produce equal streams.  Draw order is part
    of every caller's contract: consuming an extra word changes everything
    downstream, so callers must only draw when they document it.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1): top 53 bits of the next word."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n) via modulo; bias is negligible for
        the small n this tool uses and the reduction is language-neutral."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

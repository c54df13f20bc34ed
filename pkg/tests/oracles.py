"""Independent reference implementations used to freeze expected values.

Everything in this file is written against the documented contracts only,
without importing the package internals it checks, so that a test comparing
the two is a genuine cross-check rather than a tautology.
"""

from __future__ import annotations

from collections import defaultdict

_M64 = (1 << 64) - 1


def ref_mix64(state: int) -> int:
    """One-file reference mixer: written independently of the package."""
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class RefStream:
    """Reference counter generator built on ref_mix64 semantics."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _M64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)


def ref_population_discoverable_count(seed: int, count: int, fraction: float) -> int:
    """Replay the documented population draw order (identifier word, then
    visibility word per pedestrian) and count the discoverable draws."""
    stream = RefStream(seed)
    used: set[int] = set()
    discoverable = 0
    for _ in range(count):
        value = stream.next_u64() & ((1 << 48) - 1)
        while value in used or (value >> 24) == 0xF00000:
            value = stream.next_u64() & ((1 << 48) - 1)
        used.add(value)
        if stream.next_float() < fraction:
            discoverable += 1
    return discoverable


def binomial_central_interval(n: int, p: float, mass: float) -> tuple[int, int]:
    """Exact central interval: smallest k with CDF >= (1-mass)/2 up to the
    smallest k with CDF >= 1-(1-mass)/2."""
    tail = (1.0 - mass) / 2.0
    # binomial pmf via incremental ratio to stay stable for n=1000
    pmf = [(1.0 - p) ** n]
    for k in range(1, n + 1):
        pmf.append(pmf[-1] * (n - k + 1) / k * p / (1.0 - p))
    cdf = 0.0
    lo = hi = None
    for k, mass_k in enumerate(pmf):
        cdf += mass_k
        if lo is None and cdf >= tail:
            lo = k
        if hi is None and cdf >= 1.0 - tail:
            hi = k
            break
    assert lo is not None and hi is not None
    return lo, hi


def brute_force_constellations(
    sightings,  # iterable of (scanner_id, tick, id_value)
    delta: int,
    min_cooccurrence: int,
    similarity: float,
) -> set[frozenset[int]]:
    """All-pairs co-occurrence clustering, written the dumb direct way."""
    windows: dict[int, set[tuple[str, int]]] = defaultdict(set)
    for scanner, tick, value in sightings:
        windows[value].add((scanner, tick // delta))
    ids = sorted(windows)
    edges: set[tuple[int, int]] = set()
    for a in ids:
        for b in ids:
            if a >= b:
                continue
            shared = windows[a] & windows[b]
            union = windows[a] | windows[b]
            if len(shared) >= min_cooccurrence and union and len(shared) / len(union) >= similarity:
                edges.add((a, b))
    # connected components by repeated expansion
    clusters: set[frozenset[int]] = set()
    assigned: set[int] = set()
    for start in ids:
        if start in assigned:
            continue
        component = {start}
        changed = True
        while changed:
            changed = False
            for a, b in edges:
                if a in component and b not in component:
                    component.add(b)
                    changed = True
                if b in component and a not in component:
                    component.add(a)
                    changed = True
        assigned |= component
        if len(component) > 1:
            clusters.add(frozenset(component))
    return clusters


def linear_scan_match(rows, digest_value: int):
    """Filter rows whose digest equals the candidate's digest, in tick order."""
    return sorted(
        (r for r in rows if r[0] == digest_value), key=lambda r: (r[2], r[1])
    )

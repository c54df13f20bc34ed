"""Privacy-conscious trace storage and incident queries.

Raw identifiers are digested with a salted one-way function before storage,
so the store alone cannot name anyone; whoever holds the salt can still hash
a candidate identifier in real time and look for matches.  On top of the
store: eyewitness presence windows and appearance-pattern role inference.

The digest is the pinned 64-bit mixer, deliberately not a cryptographic
hash: the goal here is reproducible matching semantics, and the hashing
function is swappable where real deployments need better.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .core import DeviceClass, DeviceId
from .rng import mix64
from .trace import Sighting, read_records, write_records

DEFAULT_NIGHT_WINDOW = (22, 3)  # [start, end) hours, wrapping past midnight
DEFAULT_MIN_SIGHTINGS = 10
DEFAULT_MIN_SCANNERS_ROVER = 3
DEFAULT_NIGHT_CUTOFF = 0.9
TICKS_PER_HOUR = 3600


@dataclass(frozen=True, order=True)
class HashedId:
    digest: int

    def __post_init__(self) -> None:
        if not 0 <= self.digest < (1 << 64):
            raise ValueError("digest out of range")

    def __str__(self) -> str:
        return f"{self.digest:016x}"

    @classmethod
    def parse(cls, text: str) -> "HashedId":
        if len(text) != 16:
            raise ValueError(f"digest must be 16 hex chars, got {text!r}")
        return cls(int(text, 16))


def hash_id(dev: DeviceId, salt: int, mixer: Callable[[int], int] = mix64) -> HashedId:
    """Salted one-way digest of an identifier: one mixer application."""
    return HashedId(mixer((salt ^ dev.value) & ((1 << 64) - 1)))


@dataclass(frozen=True)
class StoreRow:
    digest: HashedId
    scanner_id: str
    tick: int
    cls: DeviceClass
    name: str


class TraceStore:
    """Write-once hashed sighting store; immutable after ingest.

    The salt is held in memory only and never serialized with the rows.
    """

    def __init__(self, salt: int, rows: Iterable[StoreRow] = ()) -> None:
        self.salt = salt
        self.rows: list[StoreRow] = sorted(
            rows, key=lambda r: (r.tick, r.scanner_id, r.digest)
        )
        self._by_digest: dict[int, list[StoreRow]] = {}
        self._by_scanner: dict[str, list[StoreRow]] = {}
        for row in self.rows:
            self._by_digest.setdefault(row.digest.digest, []).append(row)
            self._by_scanner.setdefault(row.scanner_id, []).append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def rows_for(self, digest: HashedId) -> list[StoreRow]:
        return list(self._by_digest.get(digest.digest, []))

    def subjects(self) -> list[HashedId]:
        return [HashedId(d) for d in sorted(self._by_digest)]

    def serialize(self, path: str | Path) -> None:
        write_records(
            path,
            [
                {
                    "kind": "hashed-sighting",
                    "digest": str(row.digest),
                    "scanner_id": row.scanner_id,
                    "tick": row.tick,
                    "class": row.cls.value,
                    "name": row.name,
                }
                for row in self.rows
            ],
        )

    @classmethod
    def deserialize(cls, path: str | Path, salt: int) -> "TraceStore":
        rows = []
        for rec in read_records(path):
            if rec.get("kind") != "hashed-sighting":
                continue
            rows.append(
                StoreRow(
                    digest=HashedId.parse(rec["digest"]),
                    scanner_id=str(rec["scanner_id"]),
                    tick=int(rec["tick"]),
                    cls=DeviceClass(int(rec["class"])),
                    name=str(rec["name"]),
                )
            )
        return cls(salt=salt, rows=rows)


def ingest(sightings: Sequence[Sighting], salt: int) -> TraceStore:
    """Hash every observation; row count equals input count."""
    rows = [
        StoreRow(
            digest=hash_id(s.observed_id, salt),
            scanner_id=s.scanner_id,
            tick=s.tick,
            cls=s.observed_class,
            name=s.observed_name,
        )
        for s in sightings
    ]
    return TraceStore(salt=salt, rows=rows)


def match_candidate(candidate: DeviceId, store: TraceStore) -> list[StoreRow]:
    """Rows whose digest matches the candidate under the store's salt,
    chronological.  This is the real-time police check: hash and compare."""
    return sorted(
        store.rows_for(hash_id(candidate, store.salt)),
        key=lambda r: (r.tick, r.scanner_id),
    )


def presence_window(
    store: TraceStore, scanner_id: str, t0: int, t1: int
) -> list[HashedId]:
    """Distinct subjects seen at a scanner inside the closed interval [t0, t1]."""
    if t0 > t1:
        raise ValueError(f"empty window: t0 {t0} > t1 {t1}")
    found = {
        row.digest.digest
        for row in store._by_scanner.get(scanner_id, [])
        if t0 <= row.tick <= t1
    }
    return [HashedId(d) for d in sorted(found)]


@dataclass
class AppearanceFeatures:
    subject: HashedId
    n_sightings: int
    n_distinct_scanners: int
    hour_histogram: list[int]
    night_fraction: float


@dataclass(frozen=True)
class RoleRules:
    """Thresholds for the coarse role taxonomy; data, not code."""

    night_window: tuple[int, int] = DEFAULT_NIGHT_WINDOW
    min_sightings: int = DEFAULT_MIN_SIGHTINGS
    min_scanners_rover: int = DEFAULT_MIN_SCANNERS_ROVER
    night_fraction_cutoff: float = DEFAULT_NIGHT_CUTOFF

    def __post_init__(self) -> None:
        start, end = self.night_window
        if not (0 <= start < 24 and 0 <= end < 24):
            raise ValueError("night window hours must be in [0, 24)")
        if self.min_sightings <= 0 or self.min_scanners_rover <= 0:
            raise ValueError("thresholds must be positive")

    def is_night(self, hour: int) -> bool:
        start, end = self.night_window
        if start <= end:
            return start <= hour < end
        return hour >= start or hour < end


class RoleLabel:
    FIXED_SITE_FREQUENTER = "fixed_site_frequenter"
    NOCTURNAL_ROVER = "nocturnal_rover"
    TRANSIENT = "transient"
    UNCLASSIFIED = "unclassified"


def appearance_features(
    store: TraceStore,
    subject: HashedId,
    ticks_per_hour: int = TICKS_PER_HOUR,
    night_window: tuple[int, int] = DEFAULT_NIGHT_WINDOW,
) -> AppearanceFeatures:
    """Counts, scanner spread and the day/night shape of one subject's rows."""
    rows = store.rows_for(subject)
    histogram = [0] * 24
    night = 0
    rules = RoleRules(night_window=night_window)
    for row in rows:
        hour = (row.tick // ticks_per_hour) % 24
        histogram[hour] += 1
        if rules.is_night(hour):
            night += 1
    return AppearanceFeatures(
        subject=subject,
        n_sightings=len(rows),
        n_distinct_scanners=len({r.scanner_id for r in rows}),
        hour_histogram=histogram,
        night_fraction=night / len(rows) if rows else 0.0,
    )


def classify_role(features: AppearanceFeatures, rules: Optional[RoleRules] = None) -> str:
    """Rule precedence is part of the contract: a device seen many times at a
    single site is a fixed-site frequenter even if strictly nocturnal."""
    rules = rules or RoleRules()
    if (
        features.n_sightings >= rules.min_sightings
        and features.n_distinct_scanners == 1
    ):
        return RoleLabel.FIXED_SITE_FREQUENTER
    if (
        features.n_sightings >= rules.min_sightings
        and features.n_distinct_scanners >= rules.min_scanners_rover
        and features.night_fraction >= rules.night_fraction_cutoff
    ):
        return RoleLabel.NOCTURNAL_ROVER
    if features.n_sightings < rules.min_sightings:
        return RoleLabel.TRANSIENT
    return RoleLabel.UNCLASSIFIED

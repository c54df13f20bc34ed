"""The attack toolkit: inference over a sighting log, scored against truth.

Every attack consumes only the observable log (plus declared side inputs
such as a point-of-sale database); nothing here reads ground truth except
the evaluation functions, which exist to score the attacks.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .btstack import page
from .core import (
    DeviceClass,
    DeviceId,
    MajorClass,
    OuiTable,
    ValueTable,
    major_class_of,
    manufacturer_of,
    parse_device_id,
    format_device_id,
)
from .scenario import Scenario
from .trace import (
    POINT_OF_SALE,
    TRANSFER,
    GroundTruthEvent,
    Sighting,
    TraceBundle,
    read_records,
    write_records,
)

DEFAULT_MERGE_GAP = 300
DEFAULT_DELTA = 60
DEFAULT_MIN_COOCCURRENCE = 3
DEFAULT_SIMILARITY = 0.5
DEFAULT_WINDOW = 600
DEFAULT_CONFIRM = 2
DEFAULT_GROUP_DEVICE_CAP = 4

THREATS = (
    "association",
    "location",
    "preference",
    "constellation",
    "transaction",
    "breadcrumb",
)


class DigestMismatch(ValueError):
    """Attack outputs and truth come from different runs; refusing to score."""


# ---------------------------------------------------------------------------
# side inputs


@dataclass(frozen=True)
class PosRecord:
    device: DeviceId
    person: str
    seller: str
    tick: int


class PosDatabase:
    """Point-of-sale registry linking identifiers to buyer identities."""

    def __init__(self, records: Iterable[PosRecord] = ()) -> None:
        self.records: list[PosRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def latest_owner(self, device: DeviceId) -> Optional[str]:
        """Most recent sale wins: the adversary's best guess at the holder."""
        best: Optional[PosRecord] = None
        for rec in self.records:
            if rec.device.value == device.value and (best is None or rec.tick >= best.tick):
                best = rec
        return best.person if best else None

    def original_owner(self, device: DeviceId) -> Optional[str]:
        """First sale on record; deliberately blind to later transfers."""
        best: Optional[PosRecord] = None
        for rec in self.records:
            if rec.device.value == device.value and (best is None or rec.tick < best.tick):
                best = rec
        return best.person if best else None

    @classmethod
    def from_truth(cls, truth: Iterable[GroundTruthEvent]) -> "PosDatabase":
        records = [
            PosRecord(
                device=parse_device_id(ev["device"]),
                person=ev["person"],
                seller=ev["seller"],
                tick=ev.tick,
            )
            for ev in truth
            if ev.event == POINT_OF_SALE
        ]
        return cls(records)

    def save(self, path: str | Path) -> None:
        write_records(
            path,
            [
                {
                    "kind": "pos",
                    "device": format_device_id(r.device),
                    "person": r.person,
                    "seller": r.seller,
                    "tick": r.tick,
                }
                for r in sorted(self.records, key=lambda r: (r.tick, r.device.value))
            ],
        )

    @classmethod
    def load(cls, path: str | Path) -> "PosDatabase":
        records = []
        for rec in read_records(path):
            if rec.get("kind") != "pos":
                continue
            records.append(
                PosRecord(
                    device=parse_device_id(rec["device"]),
                    person=str(rec["person"]),
                    seller=str(rec.get("seller", "")),
                    tick=int(rec.get("tick", 0)),
                )
            )
        return cls(records)


# ---------------------------------------------------------------------------
# association threat


def associate_identities(
    sightings: Sequence[Sighting], pos: PosDatabase
) -> dict[DeviceId, str]:
    """Join observed identifiers against the sale registry."""
    out: dict[DeviceId, str] = {}
    for dev in observed_ids(sightings):
        person = pos.latest_owner(dev)
        if person is not None:
            out[dev] = person
    return out


def observed_ids(sightings: Sequence[Sighting]) -> list[DeviceId]:
    seen: set[int] = set()
    out: list[DeviceId] = []
    for s in sorted(sightings):
        if s.observed_id.value not in seen:
            seen.add(s.observed_id.value)
            out.append(s.observed_id)
    return out


# ---------------------------------------------------------------------------
# location threat


@dataclass(frozen=True)
class Visit:
    scanner_id: str
    first_tick: int
    last_tick: int


@dataclass
class Itinerary:
    target: DeviceId
    visits: list[Visit] = field(default_factory=list)


def track_locations(
    sightings: Sequence[Sighting],
    target: DeviceId,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> Itinerary:
    """Chronological visit list for one identifier.

    Consecutive sightings at the same scanner merge into one visit while the
    gap stays within ``merge_gap``; any scanner change starts a new visit.
    """
    hits = sorted(
        (s.tick, s.scanner_id) for s in sightings if s.observed_id.value == target.value
    )
    visits: list[Visit] = []
    for tick, scanner in hits:
        if (
            visits
            and visits[-1].scanner_id == scanner
            and tick - visits[-1].last_tick <= merge_gap
        ):
            visits[-1] = Visit(scanner, visits[-1].first_tick, tick)
        else:
            visits.append(Visit(scanner, tick, tick))
    return Itinerary(target=target, visits=visits)


# ---------------------------------------------------------------------------
# preference threat


@dataclass
class PreferenceProfile:
    subjects: list[DeviceId]
    class_histogram: dict[str, int]
    manufacturer_histogram: dict[str, int]
    total_value: float


def profile_preferences(
    sightings: Sequence[Sighting],
    subjects: Iterable[DeviceId],
    oui: OuiTable,
    values: ValueTable,
) -> PreferenceProfile:
    """Class/manufacturer histograms and a value estimate for the distinct
    subject identifiers that actually appear in the log."""
    wanted = {d.value for d in subjects}
    first_class: dict[int, DeviceClass] = {}
    order: list[DeviceId] = []
    for s in sorted(sightings):
        v = s.observed_id.value
        if v in wanted and v not in first_class:
            first_class[v] = s.observed_class
            order.append(s.observed_id)
    class_hist: dict[str, int] = defaultdict(int)
    mfg_hist: dict[str, int] = defaultdict(int)
    total = 0.0
    for dev in order:
        cls = first_class[dev.value]
        major = major_class_of(cls)
        mfg = manufacturer_of(dev, oui)
        class_hist[major.label] += 1
        mfg_hist[mfg] += 1
        total += values.lookup(major, mfg)
    return PreferenceProfile(
        subjects=order,
        class_histogram=dict(class_hist),
        manufacturer_histogram=dict(mfg_hist),
        total_value=total,
    )


# ---------------------------------------------------------------------------
# constellation threat


@dataclass
class ConstellationSet:
    clusters: list[frozenset[int]]  # device id values
    delta: int
    min_cooccurrence: int
    similarity: float
    group_flags: list[bool] = field(default_factory=list)

    def cluster_of(self, value: int) -> Optional[int]:
        for idx, members in enumerate(self.clusters):
            if value in members:
                return idx
        return None

    def cluster_ids(self, idx: int) -> list[DeviceId]:
        return [DeviceId(v) for v in sorted(self.clusters[idx])]


def _sighting_bins(sightings: Sequence[Sighting], delta: int) -> dict[int, set[tuple[str, int]]]:
    bins: dict[int, set[tuple[str, int]]] = defaultdict(set)
    for s in sightings:
        bins[s.observed_id.value].add((s.scanner_id, s.tick // delta))
    return bins


def mine_constellations(
    sightings: Sequence[Sighting],
    delta: int = DEFAULT_DELTA,
    min_cooccurrence: int = DEFAULT_MIN_COOCCURRENCE,
    similarity: float = DEFAULT_SIMILARITY,
    group_device_cap: int = DEFAULT_GROUP_DEVICE_CAP,
) -> ConstellationSet:
    """Cluster identifiers that keep showing up together.

    Two identifiers co-occur when the same scanner sees both inside one
    ``delta``-tick window (each scanner window counted once).  Identifiers
    joined by at least ``min_cooccurrence`` shared windows with Jaccard
    window-set similarity of ``similarity`` or more form edges; clusters are
    the connected components, singletons dropped.  Clusters larger than
    ``group_device_cap`` get a group flag: they likely describe several
    people moving together rather than one pocket.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if min_cooccurrence < 1:
        raise ValueError("min_cooccurrence must be >= 1")
    bins = _sighting_bins(sightings, delta)
    ids = sorted(bins)
    parent: dict[int, int] = {v: v for v in ids}

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            shared = bins[a] & bins[b]
            if len(shared) < min_cooccurrence:
                continue
            union = len(bins[a] | bins[b])
            if union == 0 or len(shared) / union < similarity:
                continue
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, set[int]] = defaultdict(set)
    for v in ids:
        groups[find(v)].add(v)
    clusters = sorted(
        (frozenset(g) for g in groups.values() if len(g) > 1), key=lambda g: min(g)
    )
    return ConstellationSet(
        clusters=clusters,
        delta=delta,
        min_cooccurrence=min_cooccurrence,
        similarity=similarity,
        group_flags=[len(cl) > group_device_cap for cl in clusters],
    )


# ---------------------------------------------------------------------------
# transaction threat


@dataclass(frozen=True)
class TransactionEvent:
    device: DeviceId
    from_cluster: int
    to_cluster: int
    switch_tick: int


@dataclass
class TransactionScan:
    events: list[TransactionEvent]
    registry: list[frozenset[int]]  # cross-window cluster identities


def windowed_constellations(
    sightings: Sequence[Sighting],
    window: int = DEFAULT_WINDOW,
    delta: int = DEFAULT_DELTA,
    min_cooccurrence: int = DEFAULT_MIN_COOCCURRENCE,
    similarity: float = DEFAULT_SIMILARITY,
) -> list[ConstellationSet]:
    """Mine constellations independently inside each window of ``window`` ticks."""
    if window < delta:
        raise ValueError("window must be >= delta")
    if not sightings:
        return []
    horizon = max(s.tick for s in sightings)
    by_window: dict[int, list[Sighting]] = defaultdict(list)
    for s in sightings:
        by_window[s.tick // window].append(s)
    return [
        mine_constellations(by_window.get(w, []), delta, min_cooccurrence, similarity)
        for w in range(horizon // window + 1)
    ]


def scan_transactions(
    per_window: Sequence[ConstellationSet],
    window: int = DEFAULT_WINDOW,
    confirm: int = DEFAULT_CONFIRM,
) -> TransactionScan:
    """Track cluster identity across windows and flag devices that move.

    Window clusters are matched to a registry of previously seen clusters by
    best Jaccard overlap of at least 0.5 (frozen at first appearance, lowest
    index wins ties); unmatched clusters register fresh.  A device emits a
    transaction when its registry assignment changes and the new assignment
    holds for ``confirm`` consecutive windows; the switch tick is the start
    of the first changed window.
    """
    registry: list[frozenset[int]] = []
    assignments: dict[int, dict[int, int]] = defaultdict(dict)
    for w, cset in enumerate(per_window):
        for members in cset.clusters:
            best_idx = None
            best_j = 0.0
            for idx, reg in enumerate(registry):
                j = len(members & reg) / len(members | reg)
                if j >= 0.5 and j > best_j:
                    best_idx, best_j = idx, j
            if best_idx is None:
                registry.append(members)
                best_idx = len(registry) - 1
            for value in members:
                assignments[value][w] = best_idx

    events: list[TransactionEvent] = []
    n_windows = len(per_window)
    for value in sorted(assignments):
        per = assignments[value]
        established: Optional[int] = None
        candidate: Optional[int] = None
        run_start = 0
        run_len = 0
        for w in range(n_windows):
            a = per.get(w)
            if a is None:
                candidate = None
                run_len = 0
                continue
            if established is None or a == established:
                established = a if established is None else established
                candidate = None
                run_len = 0
                continue
            if candidate == a:
                run_len += 1
            else:
                candidate = a
                run_start = w
                run_len = 1
            if run_len >= confirm:
                events.append(
                    TransactionEvent(
                        device=DeviceId(value),
                        from_cluster=established,
                        to_cluster=a,
                        switch_tick=run_start * window,
                    )
                )
                established = a
                candidate = None
                run_len = 0
    events.sort(key=lambda e: (e.switch_tick, e.device.value))
    return TransactionScan(events=events, registry=registry)


def detect_transactions(
    sightings: Sequence[Sighting],
    per_window: Optional[Sequence[ConstellationSet]] = None,
    window: int = DEFAULT_WINDOW,
    confirm: int = DEFAULT_CONFIRM,
    delta: int = DEFAULT_DELTA,
    min_cooccurrence: int = DEFAULT_MIN_COOCCURRENCE,
    similarity: float = DEFAULT_SIMILARITY,
) -> list[TransactionEvent]:
    if per_window is None:
        per_window = windowed_constellations(
            sightings, window, delta, min_cooccurrence, similarity
        )
    return scan_transactions(per_window, window=window, confirm=confirm).events


# ---------------------------------------------------------------------------
# breadcrumb threat


def implicate_breadcrumbs(
    sightings: Sequence[Sighting],
    incident_scanner: str,
    incident_tick: int,
    window: int,
    pos: PosDatabase,
) -> list[tuple[Optional[str], DeviceId]]:
    """Who was at the incident: ids sighted at the scanner within +/- window,
    joined to ORIGINAL purchasers.

    The join ignores transfers and discards on purpose; implicating a
    long-gone owner is exactly the hazard being demonstrated.
    """
    present = observed_ids(
        [
            s
            for s in sightings
            if s.scanner_id == incident_scanner
            and incident_tick - window <= s.tick <= incident_tick + window
        ]
    )
    return [(pos.original_owner(dev), dev) for dev in sorted(present, key=lambda d: d.value)]


# ---------------------------------------------------------------------------
# active tracking by paging


def track_many_by_paging(
    scenario: Scenario,
    seed: int,
    targets: Sequence[DeviceId],
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> list[Itinerary]:
    """Re-run the world letting every scanner page each known identifier on
    its scan schedule.  Suppression does not help the targets: paging reaches
    stealth devices, so this reconstructs their movements anyway."""
    from .world import run_instrumented

    hits: dict[int, list[tuple[int, str]]] = {t.value: [] for t in targets}

    def probe(world, tick: int) -> None:
        for spec, runtime in zip(world.scanner_specs, world.scanner_runtimes):
            if tick < spec.offset or (tick - spec.offset) % spec.period != 0:
                continue
            for target in targets:
                if page(runtime, target, world.devices, tick).reached:
                    hits[target.value].append((tick, spec.scanner_id))

    run_instrumented(scenario, seed, on_tick=probe)
    itineraries: list[Itinerary] = []
    for target in targets:
        visits: list[Visit] = []
        for tick, scanner in sorted(hits[target.value]):
            if (
                visits
                and visits[-1].scanner_id == scanner
                and tick - visits[-1].last_tick <= merge_gap
            ):
                visits[-1] = Visit(scanner, visits[-1].first_tick, tick)
            else:
                visits.append(Visit(scanner, tick, tick))
        itineraries.append(Itinerary(target=target, visits=visits))
    return itineraries


def track_by_paging(
    scenario: Scenario,
    seed: int,
    target: DeviceId,
    merge_gap: int = DEFAULT_MERGE_GAP,
) -> Itinerary:
    return track_many_by_paging(scenario, seed, [target], merge_gap)[0]

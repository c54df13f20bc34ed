"""Scoring attack outputs against ground truth.

The gold side is rebuilt from (scenario, seed): an instrumented replay
records which devices were physically inside each scanning disc at each scan
(visibility-independent), custody timelines come from the truth log, and
pseudonym schedules are recomputed from device policies.  Undefined ratios
(empty denominators) are reported as absent rather than zero.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .attacks import (
    ConstellationSet,
    DigestMismatch,
    Itinerary,
    PosDatabase,
    TransactionEvent,
)
from .core import DeviceId, parse_device_id
from .scenario import Scenario
from .trace import (
    DISCARD,
    INCIDENT,
    PICKUP,
    POINT_OF_SALE,
    TRANSFER,
    GroundTruthEvent,
    Sighting,
    TraceBundle,
)
from .world import PresencePoint, World, run_instrumented

Holder = tuple[str, str]  # ("person", id) or ("site", id)


@dataclass(frozen=True)
class MetricValue:
    precision: Optional[float]
    recall: Optional[float]

    @classmethod
    def from_counts(cls, true_pos: int, n_pred: int, n_gold: int) -> "MetricValue":
        return cls(
            precision=true_pos / n_pred if n_pred else None,
            recall=true_pos / n_gold if n_gold else None,
        )


@dataclass
class Metrics:
    per_threat: dict[str, MetricValue]
    linkability: Optional[float] = None


def custody_timeline(
    initial: dict[int, Holder],
    truth: Iterable[GroundTruthEvent],
    horizon: int,
) -> dict[int, list[tuple[int, Holder]]]:
    """Reconstruct who holds each device over time from the truth log alone.

    Events scripted at tick t take effect at t+1, matching the simulator.
    """
    timelines: dict[int, list[tuple[int, Holder]]] = {
        dev: [(0, holder)] for dev, holder in initial.items()
    }
    for ev in sorted(truth, key=lambda e: e.tick):
        if ev.event == TRANSFER:
            dev = parse_device_id(ev["device"]).value
            timelines[dev].append((ev.tick + 1, ("person", ev["to_person"])))
        elif ev.event == DISCARD:
            dev = parse_device_id(ev["device"]).value
            timelines[dev].append((ev.tick + 1, ("site", ev["site"])))
        elif ev.event == PICKUP:
            dev = parse_device_id(ev["device"]).value
            timelines[dev].append((ev.tick + 1, ("person", ev["by_person"])))
    return timelines


def holder_at(timeline: list[tuple[int, Holder]], tick: int) -> Holder:
    current = timeline[0][1]
    for start, holder in timeline:
        if start <= tick:
            current = holder
        else:
            break
    return current


@dataclass
class GoldReference:
    """Everything the scorer knows that the attacks must not."""

    digest: str
    horizon: int
    presence: list[PresencePoint]
    truth: list[GroundTruthEvent]
    initial_owner: dict[int, Holder]
    world: World

    # -- derived views -----------------------------------------------------

    def scan_schedule(self) -> dict[str, list[int]]:
        schedule: dict[str, set[int]] = defaultdict(set)
        for scanner, tick, _ in self.presence:
            schedule[scanner].add(tick)
        return {s: sorted(ticks) for s, ticks in schedule.items()}

    def location_points(self) -> set[tuple[str, int, int]]:
        """(scanner, tick, device value) for every device physically inside a
        scanning disc at a scan tick."""
        points: set[tuple[str, int, int]] = set()
        for scanner, tick, inside in self.presence:
            for value in inside:
                points.add((scanner, tick, value))
        return points

    def observable_devices(self) -> set[int]:
        out: set[int] = set()
        for _, _, inside in self.presence:
            out.update(inside)
        return out

    def association_gold(self) -> dict[int, str]:
        gold: dict[int, str] = {}
        best_tick: dict[int, int] = {}
        for ev in self.truth:
            if ev.event != POINT_OF_SALE:
                continue
            dev = parse_device_id(ev["device"]).value
            if dev not in gold or ev.tick >= best_tick[dev]:
                gold[dev] = ev["person"]
                best_tick[dev] = ev.tick
        return gold

    def custody(self) -> dict[int, list[tuple[int, Holder]]]:
        return custody_timeline(self.initial_owner, self.truth, self.horizon)

    def constellation_gold(self) -> list[frozenset[int]]:
        """Devices with identical custody histories form the gold clusters."""
        by_timeline: dict[tuple, set[int]] = defaultdict(set)
        for dev, timeline in self.custody().items():
            by_timeline[tuple(timeline)].add(dev)
        return sorted(
            (frozenset(g) for g in by_timeline.values() if len(g) > 1),
            key=lambda g: min(g),
        )

    def transfer_gold(self) -> list[tuple[int, int]]:
        """(device value, tick) per scripted hand-over."""
        return [
            (parse_device_id(ev["device"]).value, ev.tick)
            for ev in self.truth
            if ev.event == TRANSFER
        ]

    def incident(self) -> Optional[tuple[str, int]]:
        """Scanner and tick of the scripted incident: the scanner nearest the
        incident site whose disc contains it."""
        for ev in self.truth:
            if ev.event != INCIDENT:
                continue
            site = self.world.sites[ev["site"]]
            best: Optional[tuple[float, str]] = None
            for spec in self.world.scanner_specs:
                spos = self.world.sites[spec.site].position
                dx = spos[0] - site.position[0]
                dy = spos[1] - site.position[1]
                dist2 = dx * dx + dy * dy
                if dist2 <= spec.range_m * spec.range_m:
                    key = (dist2, spec.scanner_id)
                    if best is None or key < best:
                        best = key
            if best is not None:
                return best[1], ev.tick
        return None

    def breadcrumb_gold(
        self, scanner: str, tick: int, window: int, pos: PosDatabase
    ) -> list[tuple[Optional[str], DeviceId]]:
        present: set[int] = set()
        for sc, t, inside in self.presence:
            if sc == scanner and tick - window <= t <= tick + window:
                present.update(inside)
        return [
            (pos.original_owner(DeviceId(v)), DeviceId(v)) for v in sorted(present)
        ]

    def wire_map(self, epoch_length: int) -> dict[tuple[int, int], int]:
        """(epoch, wire identifier value) -> true device value."""
        out: dict[tuple[int, int], int] = {}
        n_epochs = self.horizon // epoch_length + 1
        for dev in self.world.devices:
            for epoch in range(n_epochs):
                wire, _ = dev.wire_identity(epoch * epoch_length)
                out[(epoch, wire.value)] = dev.desc.id.value
        return out


def build_gold(scenario: Scenario, seed: int) -> GoldReference:
    result = run_instrumented(scenario, seed)
    initial: dict[int, Holder] = {}
    for person in scenario.people:
        for dev in person.devices:
            initial[dev.desc.id.value] = ("person", person.person_id)
    # generated pedestrians never appear in scripted events; register them too
    final_owners = result.world.owner_map()
    for dev in result.world.devices:
        value = dev.desc.id.value
        if value not in initial and value in final_owners:
            initial[value] = final_owners[value]
    return GoldReference(
        digest=scenario.digest(),
        horizon=scenario.sim.horizon,
        presence=result.presence,
        truth=result.bundle.truth,
        initial_owner=initial,
        world=result.world,
    )


# ---------------------------------------------------------------------------
# per-threat scoring


def evaluate_association(
    predicted: dict[DeviceId, str], gold: dict[int, str]
) -> MetricValue:
    pred_pairs = {(d.value, p) for d, p in predicted.items()}
    gold_pairs = set(gold.items())
    tp = len(pred_pairs & gold_pairs)
    return MetricValue.from_counts(tp, len(pred_pairs), len(gold_pairs))


def itinerary_points(
    itineraries: Iterable[Itinerary], schedule: dict[str, list[int]]
) -> set[tuple[str, int, int]]:
    points: set[tuple[str, int, int]] = set()
    for itin in itineraries:
        for visit in itin.visits:
            for tick in schedule.get(visit.scanner_id, ()):
                if visit.first_tick <= tick <= visit.last_tick:
                    points.add((visit.scanner_id, tick, itin.target.value))
    return points


def evaluate_itineraries(
    itineraries: Iterable[Itinerary],
    gold_points: set[tuple[str, int, int]],
    schedule: dict[str, list[int]],
) -> MetricValue:
    pred = itinerary_points(itineraries, schedule)
    tp = len(pred & gold_points)
    return MetricValue.from_counts(tp, len(pred), len(gold_points))


def evaluate_preference(
    profiled: Iterable[DeviceId], gold_devices: set[int]
) -> MetricValue:
    pred = {d.value for d in profiled}
    tp = len(pred & gold_devices)
    return MetricValue.from_counts(tp, len(pred), len(gold_devices))


def _pairs(cluster: frozenset[int]) -> set[tuple[int, int]]:
    members = sorted(cluster)
    return {(a, b) for i, a in enumerate(members) for b in members[i + 1 :]}


def evaluate_constellations(
    predicted: ConstellationSet, gold: list[frozenset[int]]
) -> MetricValue:
    pred_pairs: set[tuple[int, int]] = set()
    for cluster in predicted.clusters:
        pred_pairs |= _pairs(cluster)
    gold_pairs: set[tuple[int, int]] = set()
    for cluster in gold:
        gold_pairs |= _pairs(cluster)
    tp = len(pred_pairs & gold_pairs)
    return MetricValue.from_counts(tp, len(pred_pairs), len(gold_pairs))


def evaluate_transactions(
    predicted: Sequence[TransactionEvent],
    gold: Sequence[tuple[int, int]],
    tolerance: int,
) -> MetricValue:
    unmatched = list(gold)
    tp = 0
    for ev in sorted(predicted, key=lambda e: (e.switch_tick, e.device.value)):
        for i, (dev, tick) in enumerate(unmatched):
            if dev == ev.device.value and abs(ev.switch_tick - tick) <= tolerance:
                tp += 1
                unmatched.pop(i)
                break
    return MetricValue.from_counts(tp, len(predicted), len(gold))


def evaluate_breadcrumbs(
    predicted: Sequence[tuple[Optional[str], DeviceId]],
    gold: Sequence[tuple[Optional[str], DeviceId]],
) -> MetricValue:
    pred_set = {(p, d.value) for p, d in predicted}
    gold_set = {(p, d.value) for p, d in gold}
    tp = len(pred_set & gold_set)
    return MetricValue.from_counts(tp, len(pred_set), len(gold_set))


def linkability_score(
    sightings: Sequence[Sighting],
    wire_map: dict[tuple[int, int], int],
    epoch_length: int,
) -> Optional[float]:
    """How well an identifier-equality matcher links epochs, above chance.

    For each consecutive epoch pair the matcher links equal wire identifiers;
    a link is correct when both map to the same true device.  Chance is what
    a uniform random one-to-one matching would score.  Clamped to [0, 1].
    """
    observed: dict[int, set[int]] = defaultdict(set)
    for s in sightings:
        observed[s.tick // epoch_length].add(s.observed_id.value)
    if not observed:
        return None
    epochs = sorted(observed)
    total_pairs = 0
    correct = 0
    chance_weight = 0.0
    for e in epochs:
        if e + 1 not in observed:
            continue
        a_wires = observed[e]
        b_wires = observed[e + 1]
        devs_a = {wire_map[(e, w)] for w in a_wires if (e, w) in wire_map}
        devs_b = {wire_map[(e + 1, w)] for w in b_wires if (e + 1, w) in wire_map}
        same = devs_a & devs_b
        if not same:
            continue
        total_pairs += len(same)
        chance_weight += len(same) / max(len(a_wires), len(b_wires))
        for w in a_wires & b_wires:
            da = wire_map.get((e, w))
            db = wire_map.get((e + 1, w))
            if da is not None and da == db:
                correct += 1
    if total_pairs == 0:
        return None
    raw = correct / total_pairs
    chance = chance_weight / total_pairs
    return max(0.0, min(1.0, raw - chance))


# ---------------------------------------------------------------------------
# aggregate entry point


@dataclass
class AttackOutputs:
    """Bundle of attack results to score; absent attacks score as absent."""

    config_digest: Optional[str] = None
    association: Optional[dict[DeviceId, str]] = None
    itineraries: Optional[list[Itinerary]] = None
    profiled: Optional[list[DeviceId]] = None
    constellations: Optional[ConstellationSet] = None
    transactions: Optional[list[TransactionEvent]] = None
    breadcrumbs: Optional[list[tuple[Optional[str], DeviceId]]] = None
    page_itineraries: Optional[list[Itinerary]] = None


def evaluate_against_truth(
    outputs: AttackOutputs,
    bundle: TraceBundle,
    gold: GoldReference,
    transaction_tolerance: int = 600,
    incident_window: int = 300,
    pos: Optional[PosDatabase] = None,
    epoch_length: Optional[int] = None,
) -> Metrics:
    """Score every supplied attack output against the same run's truth."""
    for label, digest in (("outputs", outputs.config_digest), ("trace", bundle.config_digest)):
        if digest is not None and digest != gold.digest:
            raise DigestMismatch(
                f"{label} digest {digest[:12]} does not match scenario digest {gold.digest[:12]}"
            )
    per_threat: dict[str, MetricValue] = {}
    schedule = gold.scan_schedule()
    if outputs.association is not None:
        per_threat["association"] = evaluate_association(
            outputs.association, gold.association_gold()
        )
    if outputs.itineraries is not None:
        per_threat["location"] = evaluate_itineraries(
            outputs.itineraries, gold.location_points(), schedule
        )
    if outputs.profiled is not None:
        per_threat["preference"] = evaluate_preference(
            outputs.profiled, gold.observable_devices()
        )
    if outputs.constellations is not None:
        per_threat["constellation"] = evaluate_constellations(
            outputs.constellations, gold.constellation_gold()
        )
    if outputs.transactions is not None:
        per_threat["transaction"] = evaluate_transactions(
            outputs.transactions, gold.transfer_gold(), transaction_tolerance
        )
    if outputs.breadcrumbs is not None and pos is not None:
        found = gold.incident()
        if found is not None:
            scanner, tick = found
            per_threat["breadcrumb"] = evaluate_breadcrumbs(
                outputs.breadcrumbs,
                gold.breadcrumb_gold(scanner, tick, incident_window, pos),
            )
    if outputs.page_itineraries is not None:
        # score paging only over the identifiers the adversary actually knew
        targets = {itin.target.value for itin in outputs.page_itineraries}
        page_gold = {p for p in gold.location_points() if p[2] in targets}
        per_threat["page_tracking"] = evaluate_itineraries(
            outputs.page_itineraries, page_gold, schedule
        )
    link = None
    if epoch_length is not None:
        link = linkability_score(bundle.sightings, gold.wire_map(epoch_length), epoch_length)
    return Metrics(per_threat=per_threat, linkability=link)

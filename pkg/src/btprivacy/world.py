"""Deterministic discrete-event world: people carrying device constellations
move over a site graph while fixed scanners run periodic inquiries.

One tick is one second.  A run is a pure function of (scenario, seed): the
generator draw order is pinned (population identifiers and visibility first,
in declaration order, then name-policy identifier seeds, then per-response
miss draws during stepping), people move along deterministic shortest paths,
and all outputs are sorted.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional

from .btstack import DeviceRuntime, inquiry
from .core import (
    MAX_ID,
    DeviceClass,
    DeviceDescriptor,
    DeviceId,
    VisibilityMode,
    parse_device_id,
)
from .policy import DevicePolicy, NameMode, PairingRecord
from .rng import Rng
from .scenario import DEFAULT_BASE_RANGE, PersonSpec, ScannerSpec, Scenario, SiteSpec
from .trace import (
    DISCARD,
    PICKUP,
    TRANSFER,
    GroundTruthEvent,
    Sighting,
    TraceBundle,
)

SCANNER_OUI = 0xF00000  # identifier prefix reserved for fixed infrastructure


class SimulationError(RuntimeError):
    """An internal invariant was violated while stepping the world."""


def _shortest_paths(
    sites: list[SiteSpec], edges: list[tuple[str, str, int]]
) -> dict[tuple[str, str], tuple[list[str], list[int]]]:
    """All-pairs shortest paths with deterministic tie-breaking.

    Nodes are settled in (distance, site id) order, so equal-cost paths
    resolve the same way in every run.
    """
    adjacency: dict[str, dict[str, int]] = {s.site_id: {} for s in sites}
    for a, b, travel in edges:
        best = adjacency[a].get(b)
        if best is None or travel < best:
            adjacency[a][b] = travel
            adjacency[b][a] = travel
    paths: dict[tuple[str, str], tuple[list[str], list[int]]] = {}
    for source in sorted(adjacency):
        dist: dict[str, int] = {source: 0}
        prev: dict[str, str] = {}
        heap: list[tuple[int, str]] = [(0, source)]
        seen: set[str] = set()
        while heap:
            d, node = heapq.heappop(heap)
            if node in seen:
                continue
            seen.add(node)
            for neigh in sorted(adjacency[node]):
                nd = d + adjacency[node][neigh]
                if neigh not in dist or nd < dist[neigh]:
                    dist[neigh] = nd
                    prev[neigh] = node
                    heapq.heappush(heap, (nd, neigh))
        for target in seen:
            chain = [target]
            while chain[-1] != source:
                chain.append(prev[chain[-1]])
            chain.reverse()
            cumulative = [0]
            for a, b in zip(chain, chain[1:]):
                cumulative.append(cumulative[-1] + adjacency[a][b])
            paths[(source, target)] = (chain, cumulative)
    return paths


def _build_timeline(
    itinerary: tuple[tuple[int, str], ...],
    paths: dict[tuple[str, str], tuple[list[str], list[int]]],
    person_id: str,
) -> list[tuple[int, str]]:
    """Site occupancy segments for one person.

    The person hops site to site along the shortest path, departing as late
    as allows on-time arrival at the next waypoint (never before the current
    waypoint's tick).  If a leg cannot be made in time the delay carries
    forward.
    """
    first_tick, first_site = itinerary[0]
    segments: list[tuple[int, str]] = [(0, first_site)]
    arrival = 0
    current = first_site
    waypoint_tick = first_tick
    for next_tick, next_site in itinerary[1:]:
        if next_site == current:
            waypoint_tick = next_tick
            continue
        key = (current, next_site)
        if key not in paths:
            raise SimulationError(f"person {person_id!r}: no path {current!r} -> {next_site!r}")
        chain, cumulative = paths[key]
        depart = max(arrival, waypoint_tick, next_tick - cumulative[-1])
        for node, cum in zip(chain[1:], cumulative[1:]):
            segments.append((depart + cum, node))
        arrival = depart + cumulative[-1]
        current = next_site
        waypoint_tick = next_tick
    return segments


@dataclass
class PersonRuntime:
    spec: PersonSpec
    timeline: list[tuple[int, str]]
    carried: list[DeviceRuntime] = field(default_factory=list)

    def site_at(self, tick: int) -> str:
        ticks = [t for t, _ in self.timeline]
        idx = bisect_right(ticks, tick) - 1
        return self.timeline[max(idx, 0)][1]


@dataclass
class World:
    scenario: Scenario
    seed: int
    rng: Rng
    sites: dict[str, SiteSpec]
    scanner_specs: list[ScannerSpec]
    scanner_runtimes: list[DeviceRuntime]
    people: list[PersonRuntime]
    site_devices: dict[str, list[DeviceRuntime]]
    devices: list[DeviceRuntime]
    events_by_tick: dict[int, list[GroundTruthEvent]]
    clock: int = 0

    def device(self, dev_id: DeviceId) -> DeviceRuntime:
        for dev in self.devices:
            if dev.desc.id.value == dev_id.value:
                return dev
        raise KeyError(str(dev_id))

    def person(self, person_id: str) -> PersonRuntime:
        for p in self.people:
            if p.spec.person_id == person_id:
                return p
        raise KeyError(person_id)

    def owner_map(self) -> dict[int, tuple[str, str]]:
        """Current custody of every device: ('person', id) or ('site', id)."""
        owners: dict[int, tuple[str, str]] = {}
        for p in self.people:
            for dev in p.carried:
                owners[dev.desc.id.value] = ("person", p.spec.person_id)
        for site_id, devs in self.site_devices.items():
            for dev in devs:
                owners[dev.desc.id.value] = ("site", site_id)
        return owners

    def check_conservation(self) -> None:
        owners = self.owner_map()
        if len(owners) != len(self.devices):
            raise SimulationError("device custody accounting broken")


def scanner_device_id(index: int) -> DeviceId:
    return DeviceId((SCANNER_OUI << 24) | index)


def build_world(scenario: Scenario, seed: int) -> World:
    """Construct the tick-0 world.  Generator draws happen here in a pinned
    order: per generated pedestrian (prefix choice, identifier, visibility),
    then one identifier seed per name-only device in declaration order."""
    rng = Rng(seed)
    sites = {s.site_id: s for s in scenario.sites}
    paths = _shortest_paths(scenario.sites, [(e.a, e.b, e.travel) for e in scenario.edges])

    people: list[PersonRuntime] = []
    devices: list[DeviceRuntime] = []
    used_ids: set[int] = set()

    def add_person(spec: PersonSpec) -> None:
        runtime = PersonRuntime(spec=spec, timeline=_build_timeline(spec.itinerary, paths, spec.person_id))
        for dev_spec in spec.devices:
            dev = DeviceRuntime(desc=dev_spec.desc, policy=dev_spec.policy)
            runtime.carried.append(dev)
            devices.append(dev)
            used_ids.add(dev.desc.id.value)
        people.append(runtime)

    for spec in scenario.people:
        add_person(spec)

    if scenario.population is not None and scenario.population.count > 0:
        pop = scenario.population
        for i in range(pop.count):
            if pop.oui_pool:
                oui = pop.oui_pool[rng.next_below(len(pop.oui_pool))]
                value = (oui << 24) | (rng.next_u64() & 0xFFFFFF)
                while value in used_ids or (value >> 24) == SCANNER_OUI:
                    value = (oui << 24) | (rng.next_u64() & 0xFFFFFF)
            else:
                value = rng.next_u64() & MAX_ID
                while value in used_ids or (value >> 24) == SCANNER_OUI:
                    value = rng.next_u64() & MAX_ID
            mode = (
                VisibilityMode.DISCOVERABLE
                if rng.next_float() < pop.discoverable_fraction
                else VisibilityMode.STEALTH
            )
            desc = DeviceDescriptor(
                id=DeviceId(value),
                cls=DeviceClass(pop.device_class),
                name=f"{pop.name_prefix}-{i}",
                mode=mode,
            )
            person = PersonSpec(
                person_id=f"{pop.name_prefix}-{i}",
                name=f"{pop.name_prefix}-{i}",
                role="pedestrian",
                itinerary=((0, pop.site),),
                devices=(),
            )
            runtime = PersonRuntime(spec=person, timeline=[(0, pop.site)])
            dev = DeviceRuntime(desc=desc, policy=DevicePolicy(base_range=scenario.sim.base_range))
            runtime.carried.append(dev)
            devices.append(dev)
            used_ids.add(value)
            people.append(runtime)

    # name-only policies get their throwaway-identifier seed from the run stream
    for dev in devices:
        if dev.policy.names.mode is NameMode.FRIENDLY_NAME_ONLY:
            dev.policy = dev.policy.with_id_seed(rng.next_u64())

    device_by_value = {dev.desc.id.value: dev for dev in devices}
    for a, b in scenario.pairings:
        dev_a = device_by_value[a.value]
        dev_b = device_by_value[b.value]
        seed_a = dev_a.policy.renaming.seed if dev_a.policy.renaming else 0
        seed_b = dev_b.policy.renaming.seed if dev_b.policy.renaming else 0
        dev_a.pairings[b.value] = PairingRecord(peer_seed=seed_b, established_tick=0)
        dev_b.pairings[a.value] = PairingRecord(peer_seed=seed_a, established_tick=0)

    scanner_runtimes: list[DeviceRuntime] = []
    for idx, spec in enumerate(scenario.scanners):
        desc = DeviceDescriptor(
            id=scanner_device_id(idx),
            cls=DeviceClass(0),
            name=spec.scanner_id,
            mode=VisibilityMode.STEALTH,
        )
        runtime = DeviceRuntime(
            desc=desc,
            position=sites[spec.site].position,
            policy=DevicePolicy(base_range=spec.range_m),
        )
        scanner_runtimes.append(runtime)

    events_by_tick: dict[int, list[GroundTruthEvent]] = {}
    for ev in scenario.events:
        events_by_tick.setdefault(ev.tick, []).append(ev)

    world = World(
        scenario=scenario,
        seed=seed,
        rng=rng,
        sites=sites,
        scanner_specs=list(scenario.scanners),
        scanner_runtimes=scanner_runtimes,
        people=people,
        site_devices={s: [] for s in sites},
        devices=devices,
        events_by_tick=events_by_tick,
    )
    _update_positions(world, 0)
    return world


def _update_positions(world: World, tick: int) -> None:
    for person in world.people:
        pos = world.sites[person.site_at(tick)].position
        for dev in person.carried:
            dev.position = pos
    for site_id, devs in world.site_devices.items():
        pos = world.sites[site_id].position
        for dev in devs:
            dev.position = pos


def _apply_event(world: World, ev: GroundTruthEvent) -> None:
    if ev.event == TRANSFER:
        dev = world.device(_dev_id(ev["device"]))
        world.person(ev["from_person"]).carried.remove(dev)
        world.person(ev["to_person"]).carried.append(dev)
    elif ev.event == DISCARD:
        dev = world.device(_dev_id(ev["device"]))
        world.person(ev["by_person"]).carried.remove(dev)
        world.site_devices[ev["site"]].append(dev)
        dev.position = world.sites[ev["site"]].position
    elif ev.event == PICKUP:
        dev = world.device(_dev_id(ev["device"]))
        world.site_devices[ev["site"]].remove(dev)
        world.person(ev["by_person"]).carried.append(dev)
    # point_of_sale and incident are bookkeeping only


def _dev_id(text: str) -> DeviceId:
    return parse_device_id(text)


PresencePoint = tuple[str, int, frozenset]


def step(
    world: World,
    presence: Optional[list[PresencePoint]] = None,
) -> tuple[list[Sighting], list[GroundTruthEvent]]:
    """Advance one tick: move, scan, then fire scripted events.

    Events scheduled at tick t take effect after t's scans, so a transferred
    device appears in its new constellation from t+1 onward.  When a
    ``presence`` list is supplied, the set of device ids physically inside
    each scanning disc is recorded for every scan, independent of visibility
    policy (the evaluation gold).
    """
    tick = world.clock
    _update_positions(world, tick)
    sightings: list[Sighting] = []
    miss_p = world.scenario.sim.miss_probability
    for spec, runtime in zip(world.scanner_specs, world.scanner_runtimes):
        if tick < spec.offset or (tick - spec.offset) % spec.period != 0:
            continue
        if presence is not None:
            inside = frozenset(
                dev.desc.id.value
                for dev in world.devices
                if dev.powered
                and _within(runtime.position, dev.position, spec.range_m)
            )
            presence.append((spec.scanner_id, tick, inside))
        for resp in inquiry(runtime, world.devices, tick):
            if miss_p > 0.0 and world.rng.next_float() < miss_p:
                continue
            sightings.append(
                Sighting(
                    tick=tick,
                    scanner_id=spec.scanner_id,
                    observed_id=resp.responder_id,
                    observed_class=resp.cls,
                    observed_name=resp.name,
                )
            )
    fired = list(world.events_by_tick.get(tick, []))
    for ev in fired:
        _apply_event(world, ev)
    world.clock = tick + 1
    return sightings, fired


def _within(a: tuple[float, float], b: tuple[float, float], radius: float) -> bool:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return dx * dx + dy * dy <= radius * radius


@dataclass
class RunResult:
    bundle: TraceBundle
    presence: list[PresencePoint]
    world: World


def run(scenario: Scenario, seed: int) -> TraceBundle:
    """Simulate from tick 0 to the horizon; the output is fully determined
    by (scenario, seed)."""
    return run_instrumented(scenario, seed).bundle


def run_instrumented(
    scenario: Scenario,
    seed: int,
    on_tick: Optional[Callable[[World, int], None]] = None,
) -> RunResult:
    world = build_world(scenario, seed)
    sightings: list[Sighting] = []
    truth: list[GroundTruthEvent] = []
    presence: list[PresencePoint] = []
    for _ in range(scenario.sim.horizon):
        _update_positions(world, world.clock)
        if on_tick is not None:
            on_tick(world, world.clock)
        new_sightings, new_truth = step(world, presence=presence)
        sightings.extend(new_sightings)
        truth.extend(new_truth)
    bundle = TraceBundle(
        sightings=sightings, truth=truth, config_digest=scenario.digest()
    ).sorted()
    return RunResult(bundle=bundle, presence=presence, world=world)

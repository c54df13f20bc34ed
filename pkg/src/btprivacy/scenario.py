"""Scenario files: a single JSON document describing world, population,
policies, scanners and the scripted event schedule.

Loading validates everything up front (unknown keys, dangling references,
out-of-range fractions, inconsistent event chains) and reports every problem
by name, so the simulation loop itself never has to error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .core import (
    DeviceClass,
    DeviceDescriptor,
    DeviceId,
    DeviceIdParseError,
    VisibilityMode,
    parse_device_id,
)
from .policy import (
    DevicePolicy,
    NameMode,
    NamePolicy,
    RangeKnob,
    RenamingState,
    VisibilityWindow,
)
from .trace import DISCARD, EVENT_FIELDS, PICKUP, TRANSFER, GroundTruthEvent, config_digest

DEFAULT_TICKS_PER_HOUR = 3600
DEFAULT_SCANNER_PERIOD = 60
DEFAULT_BASE_RANGE = 100.0


class ScenarioError(ValueError):
    """All validation problems for one file, each one named."""

    def __init__(self, errors: list[str]) -> None:
        self.errors = errors
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    position: tuple[float, float]
    kind: str = ""


@dataclass(frozen=True)
class EdgeSpec:
    a: str
    b: str
    travel: int


@dataclass(frozen=True)
class ScannerSpec:
    scanner_id: str
    site: str
    period: int = DEFAULT_SCANNER_PERIOD
    range_m: float = DEFAULT_BASE_RANGE
    offset: int = 0


@dataclass(frozen=True)
class DeviceSpec:
    desc: DeviceDescriptor
    policy: DevicePolicy


@dataclass(frozen=True)
class PersonSpec:
    person_id: str
    name: str
    role: str
    itinerary: tuple[tuple[int, str], ...]
    devices: tuple[DeviceSpec, ...]


@dataclass(frozen=True)
class PopulationSpec:
    count: int
    discoverable_fraction: float
    site: str
    device_class: int = 0x000200
    name_prefix: str = "ped"
    oui_pool: tuple[int, ...] = ()


@dataclass(frozen=True)
class SimSpec:
    horizon: int = 0
    miss_probability: float = 0.0
    ticks_per_hour: int = DEFAULT_TICKS_PER_HOUR
    base_range: float = DEFAULT_BASE_RANGE


@dataclass
class Scenario:
    raw: dict
    sites: list[SiteSpec]
    edges: list[EdgeSpec]
    scanners: list[ScannerSpec]
    people: list[PersonSpec]
    population: Optional[PopulationSpec]
    pairings: list[tuple[DeviceId, DeviceId]]
    events: list[GroundTruthEvent]
    sim: SimSpec

    def digest(self) -> str:
        return config_digest(self.raw)

    def site_by_id(self, site_id: str) -> SiteSpec:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)


class _Checker:
    """Accumulates named validation errors instead of failing fast."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def fail(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def obj(self, value: Any, path: str, allowed: set[str]) -> dict:
        if not isinstance(value, dict):
            self.fail(path, "expected an object")
            return {}
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}", "unknown key")
        return value

    def num(self, value: Any, path: str, lo: float | None = None, hi: float | None = None) -> float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            self.fail(path, "expected a number")
            return 0.0
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}")
        if hi is not None and value > hi:
            self.fail(path, f"must be <= {hi}")
        return float(value)

    def integer(self, value: Any, path: str, lo: int | None = None, hi: int | None = None) -> int:
        if not isinstance(value, int) or isinstance(value, bool):
            self.fail(path, "expected an integer")
            return 0
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}")
        if hi is not None and value > hi:
            self.fail(path, f"must be <= {hi}")
        return value

    def text(self, value: Any, path: str) -> str:
        if not isinstance(value, str):
            self.fail(path, "expected a string")
            return ""
        return value

    def array(self, value: Any, path: str) -> list:
        if not isinstance(value, list):
            self.fail(path, "expected an array")
            return []
        return value


_MODES = {m.value: m for m in VisibilityMode}
_NAME_MODES = {m.value: m for m in NameMode}

_TOP_KEYS = {"sites", "edges", "scanners", "people", "population", "pairings", "events", "sim"}
_SITE_KEYS = {"id", "position", "kind"}
_EDGE_KEYS = {"a", "b", "travel"}
_SCANNER_KEYS = {"id", "site", "period", "range", "offset"}
_PERSON_KEYS = {"id", "name", "role", "itinerary", "devices"}
_WAYPOINT_KEYS = {"tick", "site"}
_DEVICE_KEYS = {"id", "class", "name", "mode", "services", "value_hint", "policy"}
_POLICY_KEYS = {"visibility", "renaming", "knob", "names", "base_range"}
_VIS_KEYS = {"from", "until", "mode"}
_RENAMING_KEYS = {"seed", "epoch_length", "rotate_name"}
_KNOB_KEYS = {"fraction"}
_NAMES_KEYS = {"mode", "rename_period", "id_epoch_length"}
_POPULATION_KEYS = {"count", "discoverable_fraction", "site", "device_class", "name_prefix", "oui_pool"}
_PAIRING_KEYS = {"a", "b"}
_SIM_KEYS = {"horizon", "miss_probability", "ticks_per_hour", "base_range"}


def _parse_mode(c: _Checker, value: Any, path: str) -> VisibilityMode:
    text = c.text(value, path)
    if text not in _MODES:
        c.fail(path, f"unknown mode {text!r} (expected one of {sorted(_MODES)})")
        return VisibilityMode.DISCOVERABLE
    return _MODES[text]


def _parse_policy(c: _Checker, value: Any, path: str, default_range: float) -> DevicePolicy:
    if value is None:
        return DevicePolicy(base_range=default_range)
    node = c.obj(value, path, _POLICY_KEYS)
    windows: list[VisibilityWindow] = []
    for i, w in enumerate(c.array(node.get("visibility", []), f"{path}.visibility")):
        wnode = c.obj(w, f"{path}.visibility[{i}]", _VIS_KEYS)
        start = c.integer(wnode.get("from", 0), f"{path}.visibility[{i}].from", lo=0)
        end = c.integer(wnode.get("until", 0), f"{path}.visibility[{i}].until", lo=0)
        mode = _parse_mode(c, wnode.get("mode", "discoverable"), f"{path}.visibility[{i}].mode")
        if end > start:
            windows.append(VisibilityWindow(start=start, end=end, mode=mode))
        else:
            c.fail(f"{path}.visibility[{i}]", "window must satisfy from < until")
    renaming = None
    if node.get("renaming") is not None:
        rnode = c.obj(node["renaming"], f"{path}.renaming", _RENAMING_KEYS)
        seed = c.integer(rnode.get("seed", 0), f"{path}.renaming.seed", lo=0)
        epoch = c.integer(rnode.get("epoch_length", 3600), f"{path}.renaming.epoch_length", lo=1)
        rotate = bool(rnode.get("rotate_name", False))
        renaming = RenamingState(seed=seed, epoch_length=max(epoch, 1), rotate_name=rotate)
    knob = RangeKnob()
    if node.get("knob") is not None:
        knode = c.obj(node["knob"], f"{path}.knob", _KNOB_KEYS)
        fraction = c.num(knode.get("fraction", 1.0), f"{path}.knob.fraction", lo=0.0, hi=1.0)
        knob = RangeKnob(fraction=min(max(fraction, 0.0), 1.0))
    names = NamePolicy()
    if node.get("names") is not None:
        nnode = c.obj(node["names"], f"{path}.names", _NAMES_KEYS)
        mode_text = c.text(nnode.get("mode", "stable_id"), f"{path}.names.mode")
        if mode_text not in _NAME_MODES:
            c.fail(f"{path}.names.mode", f"unknown mode {mode_text!r}")
            mode_text = "stable_id"
        names = NamePolicy(
            mode=_NAME_MODES[mode_text],
            rename_period=c.integer(nnode.get("rename_period", 0), f"{path}.names.rename_period", lo=0),
            id_epoch_length=max(
                c.integer(nnode.get("id_epoch_length", 3600), f"{path}.names.id_epoch_length", lo=1),
                1,
            ),
        )
    base_range = c.num(node.get("base_range", default_range), f"{path}.base_range", lo=0.0)
    try:
        return DevicePolicy(
            schedule=tuple(sorted(windows, key=lambda w: w.start)),
            renaming=renaming,
            knob=knob,
            names=names,
            base_range=base_range,
        )
    except ValueError as exc:
        c.fail(path, str(exc))
        return DevicePolicy(base_range=default_range)


def _parse_device(c: _Checker, value: Any, path: str, default_range: float) -> Optional[DeviceSpec]:
    node = c.obj(value, path, _DEVICE_KEYS)
    if "id" not in node:
        c.fail(f"{path}.id", "required")
        return None
    try:
        dev_id = parse_device_id(c.text(node["id"], f"{path}.id"))
    except DeviceIdParseError as exc:
        c.fail(f"{path}.id", str(exc))
        return None
    cls_value = c.integer(node.get("class", 0), f"{path}.class", lo=0, hi=(1 << 24) - 1)
    name = c.text(node.get("name", ""), f"{path}.name")
    mode = _parse_mode(c, node.get("mode", "discoverable"), f"{path}.mode")
    services = tuple(
        c.text(s, f"{path}.services[{i}]")
        for i, s in enumerate(c.array(node.get("services", []), f"{path}.services"))
    )
    value_hint = None
    if node.get("value_hint") is not None:
        value_hint = c.num(node["value_hint"], f"{path}.value_hint", lo=0.0)
    policy = _parse_policy(c, node.get("policy"), f"{path}.policy", default_range)
    try:
        desc = DeviceDescriptor(
            id=dev_id,
            cls=DeviceClass(min(max(cls_value, 0), (1 << 24) - 1)),
            name=name,
            mode=mode,
            services=services,
            value_hint=value_hint,
        )
    except ValueError as exc:
        c.fail(path, str(exc))
        return None
    return DeviceSpec(desc=desc, policy=policy)


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed document and produce typed scenario structures."""
    c = _Checker()
    top = c.obj(raw, "$", _TOP_KEYS)

    sites: list[SiteSpec] = []
    for i, s in enumerate(c.array(top.get("sites", []), "$.sites")):
        node = c.obj(s, f"$.sites[{i}]", _SITE_KEYS)
        site_id = c.text(node.get("id", ""), f"$.sites[{i}].id")
        pos = c.array(node.get("position", [0, 0]), f"$.sites[{i}].position")
        if len(pos) != 2:
            c.fail(f"$.sites[{i}].position", "expected [x, y]")
            pos = [0, 0]
        x = c.num(pos[0], f"$.sites[{i}].position[0]")
        y = c.num(pos[1], f"$.sites[{i}].position[1]")
        sites.append(SiteSpec(site_id=site_id, position=(x, y), kind=c.text(node.get("kind", ""), f"$.sites[{i}].kind")))
    site_ids = [s.site_id for s in sites]
    if len(set(site_ids)) != len(site_ids):
        c.fail("$.sites", "site ids must be unique")
    known_sites = set(site_ids)

    def check_site(ref: str, path: str) -> None:
        if ref not in known_sites:
            c.fail(path, f"unknown site {ref!r}")

    edges: list[EdgeSpec] = []
    for i, e in enumerate(c.array(top.get("edges", []), "$.edges")):
        node = c.obj(e, f"$.edges[{i}]", _EDGE_KEYS)
        a = c.text(node.get("a", ""), f"$.edges[{i}].a")
        b = c.text(node.get("b", ""), f"$.edges[{i}].b")
        check_site(a, f"$.edges[{i}].a")
        check_site(b, f"$.edges[{i}].b")
        travel = c.integer(node.get("travel", 1), f"$.edges[{i}].travel", lo=1)
        edges.append(EdgeSpec(a=a, b=b, travel=max(travel, 1)))

    scanners: list[ScannerSpec] = []
    for i, s in enumerate(c.array(top.get("scanners", []), "$.scanners")):
        node = c.obj(s, f"$.scanners[{i}]", _SCANNER_KEYS)
        scanner_id = c.text(node.get("id", ""), f"$.scanners[{i}].id")
        site = c.text(node.get("site", ""), f"$.scanners[{i}].site")
        check_site(site, f"$.scanners[{i}].site")
        scanners.append(
            ScannerSpec(
                scanner_id=scanner_id,
                site=site,
                period=max(c.integer(node.get("period", DEFAULT_SCANNER_PERIOD), f"$.scanners[{i}].period", lo=1), 1),
                range_m=c.num(node.get("range", DEFAULT_BASE_RANGE), f"$.scanners[{i}].range", lo=0.0),
                offset=c.integer(node.get("offset", 0), f"$.scanners[{i}].offset", lo=0),
            )
        )
    scanner_ids = [s.scanner_id for s in scanners]
    if len(set(scanner_ids)) != len(scanner_ids):
        c.fail("$.scanners", "scanner ids must be unique")

    sim_node = c.obj(top.get("sim", {}), "$.sim", _SIM_KEYS)
    sim = SimSpec(
        horizon=c.integer(sim_node.get("horizon", 0), "$.sim.horizon", lo=0),
        miss_probability=c.num(sim_node.get("miss_probability", 0.0), "$.sim.miss_probability", lo=0.0, hi=1.0),
        ticks_per_hour=max(c.integer(sim_node.get("ticks_per_hour", DEFAULT_TICKS_PER_HOUR), "$.sim.ticks_per_hour", lo=1), 1),
        base_range=c.num(sim_node.get("base_range", DEFAULT_BASE_RANGE), "$.sim.base_range", lo=0.0),
    )

    people: list[PersonSpec] = []
    all_device_ids: dict[int, str] = {}
    device_owner: dict[int, str] = {}
    for i, p in enumerate(c.array(top.get("people", []), "$.people")):
        node = c.obj(p, f"$.people[{i}]", _PERSON_KEYS)
        person_id = c.text(node.get("id", ""), f"$.people[{i}].id")
        pname = c.text(node.get("name", person_id), f"$.people[{i}].name")
        role = c.text(node.get("role", ""), f"$.people[{i}].role")
        waypoints: list[tuple[int, str]] = []
        for j, w in enumerate(c.array(node.get("itinerary", []), f"$.people[{i}].itinerary")):
            wnode = c.obj(w, f"$.people[{i}].itinerary[{j}]", _WAYPOINT_KEYS)
            tick = c.integer(wnode.get("tick", 0), f"$.people[{i}].itinerary[{j}].tick", lo=0)
            site = c.text(wnode.get("site", ""), f"$.people[{i}].itinerary[{j}].site")
            check_site(site, f"$.people[{i}].itinerary[{j}].site")
            waypoints.append((tick, site))
        if not waypoints:
            c.fail(f"$.people[{i}].itinerary", "at least one waypoint required")
        for (t1, _), (t2, _) in zip(waypoints, waypoints[1:]):
            if t2 <= t1:
                c.fail(f"$.people[{i}].itinerary", "waypoint ticks must be strictly increasing")
                break
        devices: list[DeviceSpec] = []
        for j, d in enumerate(c.array(node.get("devices", []), f"$.people[{i}].devices")):
            spec = _parse_device(c, d, f"$.people[{i}].devices[{j}]", sim.base_range)
            if spec is None:
                continue
            if spec.desc.id.value in all_device_ids:
                c.fail(f"$.people[{i}].devices[{j}].id", f"duplicate device id {spec.desc.id}")
            all_device_ids[spec.desc.id.value] = str(spec.desc.id)
            device_owner[spec.desc.id.value] = person_id
            devices.append(spec)
        people.append(
            PersonSpec(
                person_id=person_id,
                name=pname,
                role=role,
                itinerary=tuple(waypoints),
                devices=tuple(devices),
            )
        )
    person_ids = [p.person_id for p in people]
    if len(set(person_ids)) != len(person_ids):
        c.fail("$.people", "person ids must be unique")
    known_people = set(person_ids)

    population = None
    if top.get("population") is not None:
        node = c.obj(top["population"], "$.population", _POPULATION_KEYS)
        site = c.text(node.get("site", ""), "$.population.site")
        check_site(site, "$.population.site")
        oui_pool: list[int] = []
        for i, o in enumerate(c.array(node.get("oui_pool", []), "$.population.oui_pool")):
            text = c.text(o, f"$.population.oui_pool[{i}]")
            try:
                oui = int(text, 16)
            except ValueError:
                c.fail(f"$.population.oui_pool[{i}]", f"bad hex prefix {text!r}")
                continue
            if not 0 <= oui <= 0xFFFFFF or len(text) != 6:
                c.fail(f"$.population.oui_pool[{i}]", "expected 6 hex digits")
                continue
            oui_pool.append(oui)
        population = PopulationSpec(
            count=c.integer(node.get("count", 0), "$.population.count", lo=0),
            discoverable_fraction=c.num(
                node.get("discoverable_fraction", 0.0), "$.population.discoverable_fraction", lo=0.0, hi=1.0
            ),
            site=site,
            device_class=c.integer(node.get("device_class", 0x000200), "$.population.device_class", lo=0, hi=(1 << 24) - 1),
            name_prefix=c.text(node.get("name_prefix", "ped"), "$.population.name_prefix"),
            oui_pool=tuple(oui_pool),
        )

    pairings: list[tuple[DeviceId, DeviceId]] = []
    for i, pr in enumerate(c.array(top.get("pairings", []), "$.pairings")):
        node = c.obj(pr, f"$.pairings[{i}]", _PAIRING_KEYS)
        try:
            a = parse_device_id(c.text(node.get("a", ""), f"$.pairings[{i}].a"))
            b = parse_device_id(c.text(node.get("b", ""), f"$.pairings[{i}].b"))
        except DeviceIdParseError as exc:
            c.fail(f"$.pairings[{i}]", str(exc))
            continue
        for ref, side in ((a, "a"), (b, "b")):
            if ref.value not in all_device_ids:
                c.fail(f"$.pairings[{i}].{side}", f"unknown device {ref}")
        if a.value == b.value:
            c.fail(f"$.pairings[{i}]", "cannot pair a device with itself")
        pairings.append((a, b))

    events: list[GroundTruthEvent] = []
    for i, ev in enumerate(c.array(top.get("events", []), "$.events")):
        path = f"$.events[{i}]"
        if not isinstance(ev, dict):
            c.fail(path, "expected an object")
            continue
        kind = ev.get("event")
        if kind not in EVENT_FIELDS:
            c.fail(f"{path}.event", f"unknown event kind {kind!r}")
            continue
        allowed = {"tick", "event", *EVENT_FIELDS[kind]}
        node = c.obj(ev, path, allowed)
        tick = c.integer(node.get("tick", 0), f"{path}.tick", lo=0)
        fields = []
        missing = False
        for name in EVENT_FIELDS[kind]:
            if name not in node:
                c.fail(f"{path}.{name}", "required")
                missing = True
                continue
            fields.append((name, c.text(node[name], f"{path}.{name}")))
        if missing:
            continue
        # referential checks
        for fname, fvalue in fields:
            if fname in ("person", "from_person", "to_person", "by_person") and fvalue not in known_people:
                c.fail(f"{path}.{fname}", f"unknown person {fvalue!r}")
            if fname == "site" and fvalue not in known_sites:
                c.fail(f"{path}.{fname}", f"unknown site {fvalue!r}")
            if fname == "device":
                try:
                    ref = parse_device_id(fvalue)
                except DeviceIdParseError as exc:
                    c.fail(f"{path}.device", str(exc))
                    continue
                if ref.value not in all_device_ids:
                    c.fail(f"{path}.device", f"unknown device {fvalue}")
        try:
            events.append(GroundTruthEvent(tick=tick, event=kind, fields=tuple(fields)))
        except ValueError as exc:
            c.fail(path, str(exc))

    # itineraries must be walkable on the declared graph
    adjacency: dict[str, set[str]] = {s: set() for s in known_sites}
    for e in edges:
        if e.a in adjacency and e.b in adjacency:
            adjacency[e.a].add(e.b)
            adjacency[e.b].add(e.a)

    def reachable(src: str, dst: str) -> bool:
        if src == dst:
            return True
        frontier = [src]
        seen = {src}
        while frontier:
            node = frontier.pop()
            for neigh in adjacency.get(node, ()):
                if neigh == dst:
                    return True
                if neigh not in seen:
                    seen.add(neigh)
                    frontier.append(neigh)
        return False

    for i, p in enumerate(people):
        for (t1, s1), (t2, s2) in zip(p.itinerary, p.itinerary[1:]):
            if s1 in known_sites and s2 in known_sites and not reachable(s1, s2):
                c.fail(f"$.people[{i}].itinerary", f"no path from {s1!r} to {s2!r}")

    for value, text in all_device_ids.items():
        if (value >> 24) == 0xF00000:
            c.fail("$.people", f"device id {text} uses the prefix reserved for scanners")

    # ownership chain: scripted custody changes must be consistent over time
    if not c.errors:
        owner: dict[int, tuple[str, str]] = {
            dev: ("person", person) for dev, person in device_owner.items()
        }
        for ev in sorted(events, key=lambda e: e.tick):
            if ev.event == TRANSFER:
                dev = parse_device_id(ev["device"]).value
                holder = owner.get(dev)
                if holder != ("person", ev["from_person"]):
                    c.fail("$.events", f"transfer of {ev['device']} at tick {ev.tick}: not held by {ev['from_person']}")
                else:
                    owner[dev] = ("person", ev["to_person"])
            elif ev.event == DISCARD:
                dev = parse_device_id(ev["device"]).value
                if owner.get(dev) != ("person", ev["by_person"]):
                    c.fail("$.events", f"discard of {ev['device']} at tick {ev.tick}: not held by {ev['by_person']}")
                else:
                    owner[dev] = ("site", ev["site"])
            elif ev.event == PICKUP:
                dev = parse_device_id(ev["device"]).value
                if owner.get(dev) != ("site", ev["site"]):
                    c.fail("$.events", f"pickup of {ev['device']} at tick {ev.tick}: not discarded at {ev['site']}")
                else:
                    owner[dev] = ("person", ev["by_person"])

    if c.errors:
        raise ScenarioError(c.errors)
    return Scenario(
        raw=raw,
        sites=sites,
        edges=edges,
        scanners=scanners,
        people=people,
        population=population,
        pairings=pairings,
        events=sorted(events, key=lambda e: (e.tick, e.event)),
        sim=sim,
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ScenarioError([f"{path}: top level must be an object"])
    return scenario_from_dict(raw)

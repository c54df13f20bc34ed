"""Experiment orchestration: run the attack suite over a trace, apply defense
overlays to a scenario, probe pairing connectivity, and assemble the
threat-by-defense matrix.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import attacks
from .attacks import (
    DEFAULT_CONFIRM,
    DEFAULT_DELTA,
    DEFAULT_MERGE_GAP,
    DEFAULT_MIN_COOCCURRENCE,
    DEFAULT_SIMILARITY,
    DEFAULT_WINDOW,
    THREATS,
    PosDatabase,
)
from .btstack import inquiry, page
from .core import DeviceId, OuiTable, ValueTable, format_device_id, parse_device_id
from .evaluation import AttackOutputs, Metrics, build_gold, evaluate_against_truth
from .policy import NameMode, PairingRecord, resolve_peer
from .rng import mix64
from .scenario import Scenario, scenario_from_dict
from .trace import TraceBundle
from .world import run, run_instrumented

DEFENSES = ("baseline", "stealth", "renaming", "range_knob", "name_only")
DEFAULT_DEFENSE_EPOCH = 600
DEFAULT_KNOB_FRACTION = 0.25
DEFAULT_INCIDENT_WINDOW = 300
_RENAMING_SEED_TAG = 0x52454E414D45  # fixed tag so per-device seeds are reproducible


@dataclass
class AttackParams:
    merge_gap: int = DEFAULT_MERGE_GAP
    delta: int = DEFAULT_DELTA
    min_cooccurrence: int = DEFAULT_MIN_COOCCURRENCE
    similarity: float = DEFAULT_SIMILARITY
    window: int = DEFAULT_WINDOW
    confirm: int = DEFAULT_CONFIRM
    incident: Optional[tuple[str, int, int]] = None  # scanner, tick, half-width
    epoch_length: int = DEFAULT_DEFENSE_EPOCH


@dataclass
class AttackRun:
    outputs: AttackOutputs
    reports: list[dict] = field(default_factory=list)


def run_attacks(
    bundle: TraceBundle,
    threats: Sequence[str] = THREATS,
    params: Optional[AttackParams] = None,
    pos: Optional[PosDatabase] = None,
    oui: Optional[OuiTable] = None,
    values: Optional[ValueTable] = None,
) -> AttackRun:
    """Run the selected threats over the sighting log and build their reports."""
    params = params or AttackParams()
    oui = oui or OuiTable()
    values = values or ValueTable()
    sightings = bundle.sightings
    outputs = AttackOutputs(config_digest=bundle.config_digest)
    reports: list[dict] = []

    def report(threat: str, payload: dict) -> None:
        rec = {"kind": "report", "threat": threat}
        rec.update(payload)
        reports.append(rec)

    for threat in threats:
        if threat not in THREATS:
            raise ValueError(f"unknown threat {threat!r}")

    if "association" in threats:
        if pos is None:
            report(
                "association",
                {"error": "requires a point-of-sale database; none supplied"},
            )
        else:
            outputs.association = attacks.associate_identities(sightings, pos)
            report(
                "association",
                {
                    "matches": [
                        {"device": format_device_id(d), "person": p}
                        for d, p in sorted(
                            outputs.association.items(), key=lambda kv: kv[0].value
                        )
                    ]
                },
            )

    if "location" in threats:
        itineraries = [
            attacks.track_locations(sightings, dev, params.merge_gap)
            for dev in attacks.observed_ids(sightings)
        ]
        outputs.itineraries = itineraries
        report(
            "location",
            {
                "merge_gap": params.merge_gap,
                "itineraries": [
                    {
                        "target": format_device_id(itin.target),
                        "visits": [
                            {
                                "scanner_id": v.scanner_id,
                                "first_tick": v.first_tick,
                                "last_tick": v.last_tick,
                            }
                            for v in itin.visits
                        ],
                    }
                    for itin in itineraries
                ],
            },
        )

    if "preference" in threats:
        profile = attacks.profile_preferences(
            sightings, attacks.observed_ids(sightings), oui, values
        )
        outputs.profiled = profile.subjects
        report(
            "preference",
            {
                "class_histogram": dict(sorted(profile.class_histogram.items())),
                "manufacturer_histogram": dict(
                    sorted(profile.manufacturer_histogram.items())
                ),
                "total_value": profile.total_value,
                "devices": [format_device_id(d) for d in profile.subjects],
            },
        )

    if "constellation" in threats:
        cset = attacks.mine_constellations(
            sightings, params.delta, params.min_cooccurrence, params.similarity
        )
        outputs.constellations = cset
        report(
            "constellation",
            {
                "delta": params.delta,
                "min_cooccurrence": params.min_cooccurrence,
                "similarity": params.similarity,
                "clusters": [
                    {
                        "members": [format_device_id(d) for d in cset.cluster_ids(i)],
                        "group": cset.group_flags[i],
                    }
                    for i in range(len(cset.clusters))
                ],
            },
        )

    if "transaction" in threats:
        events = attacks.detect_transactions(
            sightings,
            window=params.window,
            confirm=params.confirm,
            delta=params.delta,
            min_cooccurrence=params.min_cooccurrence,
            similarity=params.similarity,
        )
        outputs.transactions = events
        report(
            "transaction",
            {
                "window": params.window,
                "confirm": params.confirm,
                "events": [
                    {
                        "device": format_device_id(e.device),
                        "from_cluster": e.from_cluster,
                        "to_cluster": e.to_cluster,
                        "switch_tick": e.switch_tick,
                    }
                    for e in events
                ],
            },
        )

    if "breadcrumb" in threats:
        if pos is None or params.incident is None:
            missing = []
            if pos is None:
                missing.append("point-of-sale database")
            if params.incident is None:
                missing.append("incident (scanner, tick, window)")
            report("breadcrumb", {"error": f"requires: {', '.join(missing)}"})
        else:
            scanner, tick, half = params.incident
            implicated = attacks.implicate_breadcrumbs(
                sightings, scanner, tick, half, pos
            )
            outputs.breadcrumbs = implicated
            report(
                "breadcrumb",
                {
                    "incident": {"scanner_id": scanner, "tick": tick, "window": half},
                    "implicated": [
                        {"person": person, "device": format_device_id(dev)}
                        for person, dev in implicated
                    ],
                },
            )

    return AttackRun(outputs=outputs, reports=reports)


# ---------------------------------------------------------------------------
# defense overlays


def apply_defense(
    raw_config: dict,
    defense: str,
    epoch_length: int = DEFAULT_DEFENSE_EPOCH,
    knob_fraction: float = DEFAULT_KNOB_FRACTION,
) -> dict:
    """Return a copy of a scenario with one defense applied to every
    person-carried device.  Scanners are the adversary and stay untouched."""
    if defense not in DEFENSES:
        raise ValueError(f"unknown defense {defense!r}")
    cfg = copy.deepcopy(raw_config)
    if defense == "baseline":
        return cfg
    if defense == "stealth" and "population" in cfg:
        cfg["population"]["discoverable_fraction"] = 0.0
    for person in cfg.get("people", []):
        for dev in person.get("devices", []):
            policy = dev.setdefault("policy", {})
            if defense == "stealth":
                dev["mode"] = "stealth"
            elif defense == "renaming":
                seed = mix64(parse_device_id(dev["id"]).value ^ _RENAMING_SEED_TAG)
                policy["renaming"] = {"seed": seed, "epoch_length": epoch_length}
            elif defense == "range_knob":
                policy["knob"] = {"fraction": knob_fraction}
            elif defense == "name_only":
                policy["names"] = {
                    "mode": "friendly_name_only",
                    "rename_period": 0,
                    "id_epoch_length": epoch_length,
                }
    return cfg


# ---------------------------------------------------------------------------
# pairing connectivity probe


def pairing_page_success(
    scenario: Scenario, seed: int, probe_period: int = 60
) -> Optional[float]:
    """Fraction of insider page attempts that reach the paired peer.

    Insiders resolve the peer's current identifier from whatever the pairing
    grants them: the shared rotation seed, the stable identifier, or (under
    name-only policies) a fresh discovery by name.
    """
    if not scenario.pairings:
        return None
    attempts = 0
    successes = 0

    def probe(world, tick: int) -> None:
        nonlocal attempts, successes
        if tick % probe_period != 0:
            return
        lookup = {dev.desc.id.value: dev for dev in world.devices}
        for a, b in scenario.pairings:
            for prober_v, peer_v in ((a.value, b.value), (b.value, a.value)):
                prober = lookup[prober_v]
                peer = lookup[peer_v]
                target = None
                if peer.policy.renaming is not None:
                    record = PairingRecord(
                        peer_seed=peer.policy.renaming.seed, established_tick=0
                    )
                    target = resolve_peer(
                        record, tick, peer.policy.renaming.epoch_length
                    )
                elif peer.policy.names.mode is NameMode.FRIENDLY_NAME_ONLY:
                    _, expected_name = peer.wire_identity(tick)
                    for resp in inquiry(prober, world.devices, tick):
                        if resp.name == expected_name:
                            target = resp.responder_id
                            break
                else:
                    target = peer.desc.id
                attempts += 1
                if target is not None and page(prober, target, world.devices, tick).reached:
                    successes += 1

    run_instrumented(scenario, seed, on_tick=probe)
    if attempts == 0:
        return None
    return successes / attempts


# ---------------------------------------------------------------------------
# threat x defense matrix


MATRIX_ROWS = (
    [f"{threat}_precision" for threat in THREATS]
    + [f"{threat}_recall" for threat in THREATS]
    + ["page_tracking_recall", "linkability", "page_success", "discovered_devices"]
)


@dataclass
class DefenseCell:
    defense: str
    metrics: Metrics
    page_success: Optional[float]
    discovered: int
    bundle: TraceBundle


def evaluate_defense(
    raw_config: dict,
    seed: int,
    defense: str,
    params: Optional[AttackParams] = None,
    oui: Optional[OuiTable] = None,
    values: Optional[ValueTable] = None,
    epoch_length: int = DEFAULT_DEFENSE_EPOCH,
    knob_fraction: float = DEFAULT_KNOB_FRACTION,
) -> DefenseCell:
    """Simulate one defended world, run every attack, and score it."""
    params = params or AttackParams()
    cfg = apply_defense(raw_config, defense, epoch_length, knob_fraction)
    scenario = scenario_from_dict(cfg)
    bundle = run(scenario, seed)
    gold = build_gold(scenario, seed)
    pos = PosDatabase.from_truth(bundle.truth)

    cell_params = copy.copy(params)
    if cell_params.incident is None:
        found = gold.incident()
        if found is not None:
            cell_params.incident = (found[0], found[1], DEFAULT_INCIDENT_WINDOW)

    attack_run = run_attacks(
        bundle, THREATS, cell_params, pos=pos, oui=oui, values=values
    )
    # the active adversary pages every identifier the sale registry names
    page_targets = [DeviceId(v) for v in sorted({r.device.value for r in pos.records})]
    attack_run.outputs.page_itineraries = attacks.track_many_by_paging(
        scenario, seed, page_targets, merge_gap=params.merge_gap
    )
    metrics = evaluate_against_truth(
        attack_run.outputs,
        bundle,
        gold,
        transaction_tolerance=params.window,
        incident_window=(cell_params.incident[2] if cell_params.incident else DEFAULT_INCIDENT_WINDOW),
        pos=pos,
        epoch_length=epoch_length,
    )
    return DefenseCell(
        defense=defense,
        metrics=metrics,
        page_success=pairing_page_success(scenario, seed),
        discovered=len({s.observed_id.value for s in bundle.sightings}),
        bundle=bundle,
    )


def matrix_rows(cells: Sequence[DefenseCell]) -> list[list[str]]:
    """Wide CSV: one row per metric, one column per defense."""
    header = ["metric"] + [c.defense for c in cells]
    rows = [header]
    for name in MATRIX_ROWS:
        row = [name]
        for cell in cells:
            row.append(_matrix_cell(cell, name))
        rows.append(row)
    return rows


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def _matrix_cell(cell: DefenseCell, name: str) -> str:
    if name == "linkability":
        return _fmt(cell.metrics.linkability)
    if name == "page_success":
        return _fmt(cell.page_success)
    if name == "discovered_devices":
        return str(cell.discovered)
    threat, _, kind = name.rpartition("_")
    value = cell.metrics.per_threat.get(threat)
    if value is None:
        return ""
    return _fmt(value.precision if kind == "precision" else value.recall)


def metrics_csv_rows(metrics: Metrics) -> list[list[str]]:
    """Flat per-threat CSV with a trailing linkability row."""
    rows = [["threat", "precision", "recall", "linkability"]]
    for threat in list(THREATS) + ["page_tracking"]:
        value = metrics.per_threat.get(threat)
        if value is None:
            continue
        rows.append([threat, _fmt(value.precision), _fmt(value.recall), ""])
    if metrics.linkability is not None:
        rows.append(["linkability", "", "", _fmt(metrics.linkability)])
    return rows

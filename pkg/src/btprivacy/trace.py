"""Line-structured trace format and the run-output bundle.

One record per line, each line a self-delimiting JSON object carrying a
``kind`` discriminator.  Identifiers travel in canonical colon-hex.  The
format is the contract between the simulator and every downstream consumer,
and externally produced logs of the same shape load the same way.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .core import DeviceClass, DeviceId, format_device_id, parse_device_id


class TraceFormatError(ValueError):
    pass


def canonical_json(obj: object) -> str:
    """Canonical one-line encoding: sorted keys, compact, ASCII-only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(config: dict) -> str:
    """Stable digest of a scenario: SHA-256 over the canonical encoding.

    Reserializing an equivalent config yields the same digest.
    """
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass(frozen=True, order=True)
class Sighting:
    """One scanner observation of one device's wire identity."""

    tick: int
    scanner_id: str
    observed_id: DeviceId
    observed_class: DeviceClass
    observed_name: str

    def to_record(self) -> dict:
        return {
            "kind": "sighting",
            "tick": self.tick,
            "scanner_id": self.scanner_id,
            "observed_id": format_device_id(self.observed_id),
            "observed_class": self.observed_class.value,
            "observed_name": self.observed_name,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sighting":
        return cls(
            tick=int(rec["tick"]),
            scanner_id=str(rec["scanner_id"]),
            observed_id=parse_device_id(rec["observed_id"]),
            observed_class=DeviceClass(int(rec["observed_class"])),
            observed_name=str(rec["observed_name"]),
        )


POINT_OF_SALE = "point_of_sale"
TRANSFER = "transfer"
DISCARD = "discard"
PICKUP = "pickup"
INCIDENT = "incident"

EVENT_FIELDS = {
    POINT_OF_SALE: ("person", "device", "seller"),
    TRANSFER: ("device", "from_person", "to_person"),
    DISCARD: ("device", "site", "by_person"),
    PICKUP: ("device", "site", "by_person"),
    INCIDENT: ("site",),
}


@dataclass(frozen=True, order=True)
class GroundTruthEvent:
    """Scripted fact recorded alongside the sighting log; the evaluation oracle."""

    tick: int
    event: str
    fields: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if self.event not in EVENT_FIELDS:
            raise TraceFormatError(f"unknown truth event kind {self.event!r}")
        names = tuple(k for k, _ in self.fields)
        if names != EVENT_FIELDS[self.event]:
            raise TraceFormatError(
                f"{self.event} needs fields {EVENT_FIELDS[self.event]}, got {names}"
            )

    def __getitem__(self, key: str) -> str:
        for k, v in self.fields:
            if k == key:
                return v
        raise KeyError(key)

    def to_record(self) -> dict:
        rec: dict = {"kind": "truth", "tick": self.tick, "event": self.event}
        rec.update(dict(self.fields))
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "GroundTruthEvent":
        event = str(rec["event"])
        if event not in EVENT_FIELDS:
            raise TraceFormatError(f"unknown truth event kind {event!r}")
        fields = tuple((name, str(rec[name])) for name in EVENT_FIELDS[event])
        return cls(tick=int(rec["tick"]), event=event, fields=fields)


def truth_event(tick: int, event: str, **kwargs: str) -> GroundTruthEvent:
    fields = tuple((name, str(kwargs[name])) for name in EVENT_FIELDS.get(event, ()))
    return GroundTruthEvent(tick=tick, event=event, fields=fields)


@dataclass
class TraceBundle:
    """Everything one run produces: the observable log plus the truth oracle."""

    sightings: list[Sighting]
    truth: list[GroundTruthEvent]
    config_digest: Optional[str] = None

    def sorted(self) -> "TraceBundle":
        return TraceBundle(
            sightings=sorted(self.sightings),
            truth=sorted(self.truth),
            config_digest=self.config_digest,
        )

    def to_lines(self) -> list[str]:
        lines = [canonical_json(s.to_record()) for s in self.sightings]
        lines += [canonical_json(e.to_record()) for e in self.truth]
        # interleave strictly by tick so the file reads chronologically
        lines.sort(key=_line_sort_key)
        return lines

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.to_lines()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, digest: Optional[str] = None) -> "TraceBundle":
        sightings: list[Sighting] = []
        truth: list[GroundTruthEvent] = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}:{lineno}: not a JSON record: {exc}") from None
            kind = rec.get("kind")
            if kind == "sighting":
                sightings.append(Sighting.from_record(rec))
            elif kind == "truth":
                truth.append(GroundTruthEvent.from_record(rec))
            else:
                raise TraceFormatError(f"{path}:{lineno}: unexpected record kind {kind!r}")
        return cls(sightings=sightings, truth=truth, config_digest=digest).sorted()


def _line_sort_key(line: str) -> tuple:
    rec = json.loads(line)
    return (rec["tick"], 0 if rec["kind"] == "sighting" else 1, line)


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    Path(path).write_text(
        "".join(canonical_json(r) + "\n" for r in records), encoding="utf-8"
    )


def read_records(path: str | Path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{path}:{lineno}: not a JSON record: {exc}") from None
    return out


RECORD_SCHEMA = {
    "sighting": ["tick", "scanner_id", "observed_id", "observed_class", "observed_name"],
    "truth": {
        "common": ["tick", "event"],
        "events": {kind: list(fields) for kind, fields in EVENT_FIELDS.items()},
    },
    "pos": ["device", "person", "seller", "tick"],
    "report": ["threat", "payload"],
    "hashed-sighting": ["digest", "scanner_id", "tick", "class", "name"],
    "role": ["digest", "label", "n_sightings", "n_distinct_scanners", "night_fraction"],
}

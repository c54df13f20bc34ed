"""Abstract inquiry/page protocol over a flat 2-D world.

Discovery is deterministic: every powered, discoverable device inside range
answers every inquiry.  Two stack patches are modeled on the responder side:
a hit counter and a guest book, both fed only by inquiry (paging leaves them
untouched).  Range is a closed disc limited by both parties' effective
transmit ranges; a zero effective range silences a radio entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .core import DeviceClass, DeviceDescriptor, DeviceId, VisibilityMode
from .policy import DevicePolicy, current_wire_identity


class ProtocolViolation(RuntimeError):
    """An operation was attempted by a device that cannot speak (off/unpowered)."""


class PiconetError(ValueError):
    """Piconet construction violated capacity or membership rules."""


@dataclass
class DeviceRuntime:
    """Mutable per-device simulation state.

    Mutation happens only inside the single-threaded simulation step; between
    steps the object may be read concurrently.
    """

    desc: DeviceDescriptor
    position: tuple[float, float] = (0.0, 0.0)
    powered: bool = True
    policy: DevicePolicy = field(default_factory=DevicePolicy)
    hit_counter: int = 0
    guest_book: list[tuple[DeviceId, int]] = field(default_factory=list)
    pairings: dict[int, "object"] = field(default_factory=dict)  # peer id value -> PairingRecord

    def mode_at(self, tick: int) -> VisibilityMode:
        return self.policy.mode_at(self.desc.mode, tick)

    def wire_identity(self, tick: int) -> tuple[DeviceId, str]:
        return current_wire_identity(self.desc, self.policy, tick)

    def effective_range(self) -> float:
        return self.policy.range_at()


@dataclass(frozen=True)
class InquiryResponse:
    responder_id: DeviceId  # wire identity at this tick, possibly a pseudonym
    cls: DeviceClass
    name: str
    distance: float


@dataclass(frozen=True)
class PageResult:
    reached: bool
    services: tuple[str, ...] = ()


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _in_radio_contact(inquirer: DeviceRuntime, other: DeviceRuntime) -> bool:
    limit = min(inquirer.effective_range(), other.effective_range())
    if limit <= 0.0:
        return False
    return _distance(inquirer.position, other.position) <= limit


def inquiry(
    inquirer: DeviceRuntime, world: Sequence[DeviceRuntime], tick: int
) -> list[InquiryResponse]:
    """Broadcast discovery: every in-range discoverable device responds.

    Each responder's hit counter is incremented and the inquirer's current
    wire identifier is appended to its guest book.  The response list is
    sorted by responder identifier so identical snapshots give identical
    output.
    """
    if not inquirer.powered or inquirer.mode_at(tick) is VisibilityMode.OFF:
        raise ProtocolViolation("inquirer is off or unpowered")
    inquirer_wire_id, _ = inquirer.wire_identity(tick)
    responses: list[tuple[InquiryResponse, DeviceRuntime]] = []
    for dev in world:
        if dev is inquirer or not dev.powered:
            continue
        if dev.mode_at(tick) is not VisibilityMode.DISCOVERABLE:
            continue
        if not _in_radio_contact(inquirer, dev):
            continue
        wire_id, wire_name = dev.wire_identity(tick)
        responses.append(
            (
                InquiryResponse(
                    responder_id=wire_id,
                    cls=dev.desc.cls,
                    name=wire_name,
                    distance=_distance(inquirer.position, dev.position),
                ),
                dev,
            )
        )
    responses.sort(key=lambda pair: pair[0].responder_id)
    for resp, dev in responses:
        dev.hit_counter += 1
        dev.guest_book.append((inquirer_wire_id, tick))
    return [resp for resp, _ in responses]


def page(
    inquirer: DeviceRuntime,
    target_id: DeviceId,
    world: Sequence[DeviceRuntime],
    tick: int,
) -> PageResult:
    """Directly address a device by identifier.

    Succeeds against stealth devices: suppression hides a device from
    inquiry but a party that already knows the current identifier connects
    anyway.  Paging never touches hit counters or guest books.
    """
    if not inquirer.powered or inquirer.mode_at(tick) is VisibilityMode.OFF:
        raise ProtocolViolation("inquirer is off or unpowered")
    for dev in world:
        if dev is inquirer or not dev.powered:
            continue
        if dev.mode_at(tick) is VisibilityMode.OFF:
            continue
        wire_id, _ = dev.wire_identity(tick)
        if wire_id != target_id:
            continue
        if _in_radio_contact(inquirer, dev):
            return PageResult(reached=True, services=dev.desc.services)
    return PageResult(reached=False)


def set_mode(device: DeviceRuntime, mode: VisibilityMode) -> DeviceRuntime:
    """Change only the visibility mode; counters and book are preserved."""
    device.desc = replace(device.desc, mode=mode)
    return device


def read_hit_counter(device: DeviceRuntime) -> int:
    return device.hit_counter


def read_guest_book(device: DeviceRuntime) -> list[tuple[DeviceId, int]]:
    return list(device.guest_book)


MAX_SLAVES = 7


@dataclass(frozen=True)
class Piconet:
    """Ad-hoc network of one master and up to seven slaves."""

    master: DeviceId
    slaves: tuple[DeviceId, ...]


def form_piconet(master: DeviceId, slaves: Iterable[DeviceId]) -> Piconet:
    slave_list = tuple(slaves)
    if len(slave_list) > MAX_SLAVES:
        raise PiconetError(f"piconet capacity exceeded: {len(slave_list)} slaves > {MAX_SLAVES}")
    members = [master, *slave_list]
    if len({m.value for m in members}) != len(members):
        raise PiconetError("piconet members must be distinct")
    return Piconet(master=master, slaves=slave_list)

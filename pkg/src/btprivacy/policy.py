"""Device-side privacy policies: visibility schedules, pseudonym renaming,
transmit-range scaling, and name-only identification.

All functions here are pure over immutable policy state; epoch arithmetic is
driven entirely by the simulation tick handed in by the caller.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import MAX_ID, DeviceDescriptor, DeviceId, VisibilityMode
from .rng import mix64

DEFAULT_BASE_RANGE_M = 100.0


def pseudonym_at(seed: int, epoch: int) -> DeviceId:
    """Identifier presented during ``epoch`` by a device renaming with ``seed``.

    One application of the pinned mixer to (seed XOR epoch), truncated to 48
    bits.  Anyone holding the seed can recompute the whole sequence; nobody
    else can link two epochs better than chance.
    """
    return DeviceId(mix64((seed ^ epoch) & ((1 << 64) - 1)) & MAX_ID)


@dataclass(frozen=True)
class RenamingState:
    """Seed-derived identifier rotation shared with paired peers."""

    seed: int
    epoch_length: int
    rotate_name: bool = False  # when set, the friendly name rotates with the id

    def __post_init__(self) -> None:
        if self.epoch_length < 1:
            raise ValueError("epoch_length must be >= 1")

    def epoch_of(self, tick: int) -> int:
        return tick // self.epoch_length

    def id_at(self, tick: int) -> DeviceId:
        return pseudonym_at(self.seed, self.epoch_of(tick))


@dataclass(frozen=True)
class RangeKnob:
    """Transmit-power scaling: effective range = fraction x base range.

    Fraction 0 silences the radio for both discovery and paging, even at
    zero distance.
    """

    fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("knob fraction must be in [0, 1]")


def effective_range(base: float, knob: RangeKnob) -> float:
    return base * knob.fraction


class NameMode(enum.Enum):
    STABLE_ID = "stable_id"
    FRIENDLY_NAME_ONLY = "friendly_name_only"


@dataclass(frozen=True)
class NamePolicy:
    """How a device identifies itself on the wire.

    Under FRIENDLY_NAME_ONLY the identifier field carries a throwaway value
    that rotates every ``id_epoch_length`` ticks and identity travels in the
    name alone.  ``rename_period`` > 0 additionally self-assigns a fresh name
    every period, which breaks name-based pairings (see NamePairing).
    """

    mode: NameMode = NameMode.STABLE_ID
    rename_period: int = 0
    id_epoch_length: int = 3600
    id_seed: int = 0  # drawn from the run generator at world construction

    def __post_init__(self) -> None:
        if self.rename_period < 0:
            raise ValueError("rename_period must be >= 0")
        if self.id_epoch_length < 1:
            raise ValueError("id_epoch_length must be >= 1")

    def name_epoch(self, tick: int) -> int:
        if self.rename_period <= 0:
            return 0
        return tick // self.rename_period

    def name_at(self, base_name: str, tick: int) -> str:
        epoch = self.name_epoch(tick)
        if epoch == 0:
            return base_name
        # self-assigned replacement name, deterministic per (seed, epoch)
        return "bt-%06x" % (mix64(self.id_seed ^ (0xA5A5 << 32) ^ epoch) & 0xFFFFFF)

    def wire_id_at(self, tick: int) -> DeviceId:
        return pseudonym_at(self.id_seed, tick // self.id_epoch_length)


@dataclass(frozen=True)
class VisibilityWindow:
    start: int  # inclusive
    end: int  # exclusive
    mode: VisibilityMode

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError("empty visibility window")


@dataclass(frozen=True)
class DevicePolicy:
    """Aggregate per-device policy; the default is fully transparent."""

    schedule: tuple[VisibilityWindow, ...] = ()
    renaming: Optional[RenamingState] = None
    knob: RangeKnob = field(default_factory=RangeKnob)
    names: NamePolicy = field(default_factory=NamePolicy)
    base_range: float = DEFAULT_BASE_RANGE_M

    def __post_init__(self) -> None:
        windows = sorted(self.schedule, key=lambda w: w.start)
        for a, b in zip(windows, windows[1:]):
            if b.start < a.end:
                raise ValueError("overlapping visibility windows")

    def mode_at(self, base_mode: VisibilityMode, tick: int) -> VisibilityMode:
        for w in self.schedule:
            if w.start <= tick < w.end:
                return w.mode
        return base_mode

    def range_at(self) -> float:
        return effective_range(self.base_range, self.knob)

    def with_id_seed(self, seed: int) -> "DevicePolicy":
        return replace(self, names=replace(self.names, id_seed=seed))


def current_wire_identity(
    desc: DeviceDescriptor, policy: DevicePolicy, tick: int
) -> tuple[DeviceId, str]:
    """Identifier and name a device presents on the wire at ``tick``."""
    if policy.names.mode is NameMode.FRIENDLY_NAME_ONLY:
        return policy.names.wire_id_at(tick), policy.names.name_at(desc.name, tick)
    if policy.renaming is not None:
        wire = policy.renaming.id_at(tick)
        if policy.renaming.rotate_name:
            name = "bt-%06x" % (
                mix64(policy.renaming.seed ^ (0x5A5A << 32) ^ policy.renaming.epoch_of(tick))
                & 0xFFFFFF
            )
        else:
            name = desc.name
        return wire, name
    return desc.id, desc.name


@dataclass(frozen=True)
class PairingRecord:
    """Established pairing with one peer: the peer's rotation seed is shared
    at pairing time so the relationship survives identifier rotation."""

    peer_seed: int
    established_tick: int


def resolve_peer(pairing: PairingRecord, tick: int, epoch_length: int) -> DeviceId:
    """Current identifier of a paired peer, recomputed from the shared seed."""
    return pseudonym_at(pairing.peer_seed, tick // epoch_length)


class PairingStatus(enum.Enum):
    VALID = "valid"
    REQUIRES_REDISCOVERY = "requires-rediscovery"


@dataclass(frozen=True)
class NamePairing:
    """Name-based pairing (no shared seed): holds each side's rename period.

    The pairing lasts only while both sides keep the names they had when it
    was established.
    """

    established_tick: int
    rename_period_a: int
    rename_period_b: int


def break_on_rename(pairing: NamePairing, tick: int) -> PairingStatus:
    """Name-based pairings survive until either side self-assigns a new name."""
    for period in (pairing.rename_period_a, pairing.rename_period_b):
        if period > 0 and tick // period != pairing.established_tick // period:
            return PairingStatus.REQUIRES_REDISCOVERY
    return PairingStatus.VALID

"""Domain types shared by the simulator, the attack toolkit and the queries.

Everything here is an immutable value with pure operations, safe to share
between any number of readers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

MAX_ID = (1 << 48) - 1
MAX_CLASS = (1 << 24) - 1
MAX_NAME_LEN = 256

UNKNOWN_MANUFACTURER = "unknown"


class DeviceIdParseError(ValueError):
    """Raised for malformed identifier text; carries the offending position."""

    def __init__(self, text: str, position: int, reason: str) -> None:
        super().__init__(f"bad device id {text!r} at position {position}: {reason}")
        self.text = text
        self.position = position
        self.reason = reason


@dataclass(frozen=True, order=True)
class DeviceId:
    """48-bit device identifier; the high 24 bits name the manufacturer."""

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= MAX_ID:
            raise ValueError(f"device id out of range: {self.value:#x}")

    @property
    def oui(self) -> int:
        return self.value >> 24

    @property
    def nic(self) -> int:
        return self.value & 0xFFFFFF

    def __str__(self) -> str:
        return format_device_id(self)


def format_device_id(dev: DeviceId) -> str:
    """Canonical text form: six colon-separated uppercase hex octets."""
    octets = [(dev.value >> shift) & 0xFF for shift in range(40, -8, -8)]
    return ":".join(f"{o:02X}" for o in octets)


def parse_device_id(text: str) -> DeviceId:
    """Parse the canonical colon-hex form, case-insensitively.

    Rejects anything that is not exactly six two-digit hex octets joined by
    colons, naming the first offending character position.
    """
    if len(text) != 17:
        raise DeviceIdParseError(text, len(text), "expected 17 characters")
    value = 0
    hexdigits = "0123456789abcdefABCDEF"
    for i, ch in enumerate(text):
        if i % 3 == 2:
            if ch != ":":
                raise DeviceIdParseError(text, i, "expected ':'")
        else:
            if ch not in hexdigits:
                raise DeviceIdParseError(text, i, "expected hex digit")
            value = (value << 4) | int(ch, 16)
    return DeviceId(value)


class MajorClass(enum.Enum):
    MISC = 0
    COMPUTER = 1
    PHONE = 2
    LAN = 3
    AUDIO_VIDEO = 4
    PERIPHERAL = 5
    IMAGING = 6
    SATNAV = 7
    OTHER = -1

    @property
    def label(self) -> str:
        return _MAJOR_LABELS[self]


_MAJOR_LABELS = {
    MajorClass.MISC: "misc",
    MajorClass.COMPUTER: "computer",
    MajorClass.PHONE: "phone",
    MajorClass.LAN: "lan",
    MajorClass.AUDIO_VIDEO: "audio-video",
    MajorClass.PERIPHERAL: "peripheral",
    MajorClass.IMAGING: "imaging",
    MajorClass.SATNAV: "satnav",
    MajorClass.OTHER: "other",
}
_MAJOR_BY_LABEL = {label: major for major, label in _MAJOR_LABELS.items()}
_MAJOR_BY_CODE = {m.value: m for m in MajorClass if m is not MajorClass.OTHER}


def major_class_by_label(label: str) -> MajorClass:
    try:
        return _MAJOR_BY_LABEL[label]
    except KeyError:
        raise ValueError(f"unknown major class name {label!r}") from None


@dataclass(frozen=True, order=True)
class DeviceClass:
    """24-bit class descriptor.

    Only the major-class field (bits 8..12) is interpreted; the remaining
    bits are carried opaquely.
    """

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= MAX_CLASS:
            raise ValueError(f"device class out of range: {self.value:#x}")

    @property
    def major(self) -> MajorClass:
        return major_class_of(self)


def major_class_of(cls: DeviceClass) -> MajorClass:
    """Decode bits 8..12; codes without a listed meaning map to OTHER."""
    code = (cls.value >> 8) & 0x1F
    return _MAJOR_BY_CODE.get(code, MajorClass.OTHER)


def friendly_name(text: str) -> str:
    """Validate a user-assigned device name (at most 256 characters)."""
    if len(text) > MAX_NAME_LEN:
        raise ValueError(f"friendly name too long: {len(text)} > {MAX_NAME_LEN}")
    return text


class VisibilityMode(enum.Enum):
    OFF = "off"
    STEALTH = "stealth"
    DISCOVERABLE = "discoverable"


@dataclass(frozen=True)
class DeviceDescriptor:
    """Static identity of one simulated device."""

    id: DeviceId
    cls: DeviceClass
    name: str
    mode: VisibilityMode = VisibilityMode.DISCOVERABLE
    services: tuple[str, ...] = ()
    value_hint: Optional[float] = None

    def __post_init__(self) -> None:
        friendly_name(self.name)
        if len(set(self.services)) != len(self.services):
            raise ValueError(f"duplicate service tags on {self.id}")
        if self.value_hint is not None and self.value_hint < 0:
            raise ValueError("value_hint must be non-negative")


class OuiTable:
    """Manufacturer-prefix lookup table; misses degrade to 'unknown'."""

    def __init__(self, entries: Optional[Mapping[int, str]] = None) -> None:
        self.entries: dict[int, str] = {}
        for oui, name in (entries or {}).items():
            if not 0 <= oui <= 0xFFFFFF:
                raise ValueError(f"oui out of range: {oui:#x}")
            self.entries[oui] = name

    def lookup(self, oui: int) -> str:
        return self.entries.get(oui, UNKNOWN_MANUFACTURER)

    @classmethod
    def load(cls, path: str | Path) -> "OuiTable":
        """Read ``<6 hex digits> <name>`` lines; '#' comments and blanks skipped."""
        entries: dict[int, str] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2 or len(parts[0]) != 6:
                raise ValueError(f"{path}:{lineno}: expected '<6 hex digits> <name>'")
            try:
                oui = int(parts[0], 16)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad hex prefix {parts[0]!r}") from None
            entries[oui] = parts[1].strip()
        return cls(entries)


class ValueTable:
    """Monetary value estimates keyed by (major class, manufacturer)."""

    def __init__(self, entries: Optional[Mapping[tuple[MajorClass, str], float]] = None) -> None:
        self.entries: dict[tuple[MajorClass, str], float] = {}
        for key, value in (entries or {}).items():
            if value < 0:
                raise ValueError(f"negative value for {key}")
            self.entries[key] = value

    def lookup(self, major: MajorClass, manufacturer: str) -> float:
        return self.entries.get((major, manufacturer), 0.0)

    @classmethod
    def load(cls, path: str | Path) -> "ValueTable":
        """Read ``<major-class-name> <manufacturer> <integer value>`` lines.

        The manufacturer may contain spaces; the class is the first token and
        the value the last.
        """
        entries: dict[tuple[MajorClass, str], float] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ValueError(
                    f"{path}:{lineno}: expected '<major-class> <manufacturer> <value>'"
                )
            major = major_class_by_label(parts[0])
            manufacturer = " ".join(parts[1:-1])
            try:
                value = int(parts[-1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value {parts[-1]!r}") from None
            if value < 0:
                raise ValueError(f"{path}:{lineno}: negative value")
            entries[(major, manufacturer)] = float(value)
        return cls(entries)


def manufacturer_of(dev: DeviceId, table: OuiTable) -> str:
    return table.lookup(dev.oui)


def device_value(desc: DeviceDescriptor, oui: OuiTable, values: ValueTable) -> float:
    """Estimated monetary value: explicit hint, else table lookup, else 0."""
    if desc.value_hint is not None:
        return desc.value_hint
    return values.lookup(major_class_of(desc.cls), manufacturer_of(desc.id, oui))


def sighting_value(dev: DeviceId, cls: DeviceClass, oui: OuiTable, values: ValueTable) -> float:
    """Value estimate from observation alone (no descriptor available)."""
    return values.lookup(major_class_of(cls), manufacturer_of(dev, oui))


def unique_ids(ids: Iterable[DeviceId]) -> list[DeviceId]:
    """Stable-order deduplication helper used by several consumers."""
    seen: set[int] = set()
    out: list[DeviceId] = []
    for d in ids:
        if d.value not in seen:
            seen.add(d.value)
            out.append(d)
    return out

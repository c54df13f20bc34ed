"""Bluetooth discovery privacy testbed.

A deterministic simulator of device discovery in an instrumented city, an
attack toolkit that mines scan traces for identity, location, preference,
constellation, transaction and breadcrumb leaks, device-side countermeasures,
and privacy-conscious hashed trace storage with eyewitness queries.
"""

__version__ = "0.1.0"

from .core import (
    DeviceClass,
    DeviceDescriptor,
    DeviceId,
    MajorClass,
    OuiTable,
    ValueTable,
    VisibilityMode,
    device_value,
    format_device_id,
    major_class_of,
    manufacturer_of,
    parse_device_id,
)
from .rng import Rng, mix64

__all__ = [
    "DeviceClass",
    "DeviceDescriptor",
    "DeviceId",
    "MajorClass",
    "OuiTable",
    "Rng",
    "ValueTable",
    "VisibilityMode",
    "device_value",
    "format_device_id",
    "major_class_of",
    "manufacturer_of",
    "mix64",
    "parse_device_id",
    "__version__",
]

import random

import pytest

from btprivacy.core import (
    DeviceClass,
    DeviceDescriptor,
    DeviceId,
    DeviceIdParseError,
    MajorClass,
    OuiTable,
    ValueTable,
    device_value,
    format_device_id,
    major_class_of,
    manufacturer_of,
    parse_device_id,
)


def test_parse_zero_identity():
    assert parse_device_id("00:00:00:00:00:00") == DeviceId(0)


def test_parse_max_value():
    assert parse_device_id("FF:FF:FF:FF:FF:FF") == DeviceId(2**48 - 1)


def test_parse_oui_nic_split():
    # independent bit arithmetic on the hex literal: 0x0A1B2C << 24 | 1
    dev = parse_device_id("0A:1B:2C:00:00:01")
    assert dev.value == (0x0A1B2C << 24) | 0x000001
    assert dev.oui == 0x0A1B2C
    assert dev.nic == 0x000001


def test_parse_case_insensitive_canonical_output():
    dev = parse_device_id("ab:cd:ef:01:23:45")
    assert format_device_id(dev) == "AB:CD:EF:01:23:45"


@pytest.mark.parametrize(
    "text,position",
    [
        ("00:00:00:00:00", 14),  # wrong length
        ("0G:00:00:00:00:00", 1),  # non-hex digit
        ("00-00-00-00-00-00", 2),  # wrong separator
        ("00:00:00:00:00:0", 16),
        ("", 0),
    ],
)
def test_parse_errors_name_position(text, position):
    with pytest.raises(DeviceIdParseError) as err:
        parse_device_id(text)
    assert err.value.position == position


def test_round_trip_property():
    rnd = random.Random(20_08)
    for _ in range(500):
        value = rnd.getrandbits(48)
        dev = DeviceId(value)
        assert parse_device_id(format_device_id(dev)) == dev
    # and the text side
    for _ in range(100):
        text = ":".join(f"{rnd.getrandbits(8):02X}" for _ in range(6))
        assert format_device_id(parse_device_id(text)) == text


def test_device_id_range_checked():
    with pytest.raises(ValueError):
        DeviceId(2**48)
    with pytest.raises(ValueError):
        DeviceId(-1)


def test_major_class_phone():
    # bits 8..12 carry the code: 0x000200 >> 8 == 2
    assert major_class_of(DeviceClass(0x000200)) is MajorClass.PHONE


def test_major_class_zero_is_misc():
    assert major_class_of(DeviceClass(0x000000)) is MajorClass.MISC


def test_major_class_unmapped_falls_through():
    assert major_class_of(DeviceClass(0x001F00)) is MajorClass.OTHER


def test_major_class_depends_only_on_bits_8_to_12():
    rnd = random.Random(7)
    for _ in range(500):
        value = rnd.getrandbits(24)
        same_code = (value & ~(0x1F << 8)) | (value & (0x1F << 8))
        assert major_class_of(DeviceClass(value)) is major_class_of(DeviceClass(same_code))
        # flipping bits outside the field never changes the decode
        flipped = value ^ 0b11  # low bits
        assert major_class_of(DeviceClass(value)) is major_class_of(DeviceClass(flipped))


def test_manufacturer_lookup():
    table = OuiTable({0x0A1B2C: "AcmePhone"})
    assert manufacturer_of(DeviceId(0x0A1B2C << 24), table) == "AcmePhone"


def test_manufacturer_empty_table_unknown():
    assert manufacturer_of(DeviceId(123), OuiTable()) == "unknown"


def test_manufacturer_miss_unknown():
    table = OuiTable({0x000002: "X"})
    assert manufacturer_of(DeviceId(0x000001 << 24), table) == "unknown"


def _desc(value_hint=None, cls=0x000200, oui=0x0A1B2C):
    return DeviceDescriptor(
        id=DeviceId(oui << 24 | 1),
        cls=DeviceClass(cls),
        name="thing",
        value_hint=value_hint,
    )


def test_device_value_hint_wins():
    assert device_value(_desc(value_hint=300), OuiTable(), ValueTable()) == 300


def test_device_value_table_lookup():
    oui = OuiTable({0x0A1B2C: "AcmePhone"})
    values = ValueTable({(MajorClass.PHONE, "AcmePhone"): 250})
    assert device_value(_desc(), oui, values) == 250


def test_device_value_default_zero():
    assert device_value(_desc(), OuiTable(), ValueTable()) == 0


def test_device_value_monotone_in_table():
    oui = OuiTable({0x0A1B2C: "AcmePhone"})
    small = ValueTable({(MajorClass.PHONE, "AcmePhone"): 100})
    bigger = ValueTable(
        {(MajorClass.PHONE, "AcmePhone"): 100, (MajorClass.SATNAV, "CartoNav"): 50}
    )
    desc = _desc()
    assert device_value(desc, oui, bigger) >= device_value(desc, oui, small)
    hinted = _desc(value_hint=10)
    assert device_value(hinted, oui, bigger) == device_value(hinted, oui, small) == 10


def test_descriptor_rejects_duplicate_services():
    with pytest.raises(ValueError):
        DeviceDescriptor(
            id=DeviceId(1),
            cls=DeviceClass(0),
            name="x",
            services=("a", "a"),
        )


def test_friendly_name_length_limit():
    DeviceDescriptor(id=DeviceId(1), cls=DeviceClass(0), name="x" * 256)
    with pytest.raises(ValueError):
        DeviceDescriptor(id=DeviceId(1), cls=DeviceClass(0), name="x" * 257)


def test_oui_table_file_parsing(tmp_path):
    path = tmp_path / "oui.txt"
    path.write_text(
        "# comment line\n"
        "\n"
        "0A1B2C AcmePhone\n"
        "0B2C3D Bee Audio Works  # trailing comment\n"
    )
    table = OuiTable.load(path)
    assert table.lookup(0x0A1B2C) == "AcmePhone"
    assert table.lookup(0x0B2C3D) == "Bee Audio Works"
    assert table.lookup(0x123456) == "unknown"


def test_oui_table_file_rejects_bad_prefix(tmp_path):
    path = tmp_path / "oui.txt"
    path.write_text("XYZ AcmePhone\n")
    with pytest.raises(ValueError):
        OuiTable.load(path)


def test_value_table_file_parsing(tmp_path):
    path = tmp_path / "values.txt"
    path.write_text(
        "# class manufacturer value\n"
        "phone AcmePhone 250\n"
        "audio-video Bee Audio Works 80\n"
    )
    table = ValueTable.load(path)
    assert table.lookup(MajorClass.PHONE, "AcmePhone") == 250
    assert table.lookup(MajorClass.AUDIO_VIDEO, "Bee Audio Works") == 80
    assert table.lookup(MajorClass.PHONE, "Nobody") == 0


def test_value_table_rejects_negative(tmp_path):
    path = tmp_path / "values.txt"
    path.write_text("phone AcmePhone -5\n")
    with pytest.raises(ValueError):
        ValueTable.load(path)

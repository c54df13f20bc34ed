import random

import pytest

from btprivacy.btstack import (
    DeviceRuntime,
    PiconetError,
    ProtocolViolation,
    form_piconet,
    inquiry,
    page,
    read_guest_book,
    read_hit_counter,
    set_mode,
)
from btprivacy.core import DeviceClass, DeviceDescriptor, DeviceId, VisibilityMode
from btprivacy.policy import DevicePolicy, RangeKnob


def make_device(
    value: int,
    mode=VisibilityMode.DISCOVERABLE,
    position=(0.0, 0.0),
    powered=True,
    services=(),
    base_range=100.0,
    knob=1.0,
):
    return DeviceRuntime(
        desc=DeviceDescriptor(
            id=DeviceId(value),
            cls=DeviceClass(0x200),
            name=f"dev-{value}",
            mode=mode,
            services=tuple(services),
        ),
        position=position,
        powered=powered,
        policy=DevicePolicy(base_range=base_range, knob=RangeKnob(knob)),
    )


def test_inquiry_lone_device_empty_world():
    scanner = make_device(1)
    assert inquiry(scanner, [scanner], 0) == []


def test_inquiry_in_range_increments_hit_counter():
    scanner = make_device(1)
    target = make_device(2, position=(50.0, 0.0))
    assert target.hit_counter == 0
    responses = inquiry(scanner, [scanner, target], 5)
    assert len(responses) == 1
    assert responses[0].responder_id == DeviceId(2)
    assert responses[0].distance == 50.0
    assert target.hit_counter == 1
    assert target.guest_book == [(DeviceId(1), 5)]


def test_inquiry_stealth_is_silent_even_point_blank():
    scanner = make_device(1)
    hidden = make_device(2, mode=VisibilityMode.STEALTH, position=(1.0, 0.0))
    assert inquiry(scanner, [scanner, hidden], 0) == []
    assert hidden.hit_counter == 0


def test_inquiry_out_of_range_silent():
    scanner = make_device(1)
    far = make_device(2, position=(101.0, 0.0))
    assert inquiry(scanner, [scanner, far], 0) == []


def test_inquiry_off_inquirer_is_protocol_violation():
    scanner = make_device(1, mode=VisibilityMode.OFF)
    with pytest.raises(ProtocolViolation):
        inquiry(scanner, [scanner], 0)
    unpowered = make_device(1, powered=False)
    with pytest.raises(ProtocolViolation):
        inquiry(unpowered, [unpowered], 0)


def test_inquiry_sorted_by_responder_id():
    scanner = make_device(1)
    world = [scanner] + [make_device(v, position=(10.0, 0.0)) for v in (9, 3, 7, 5)]
    responses = inquiry(scanner, world, 0)
    ids = [r.responder_id.value for r in responses]
    assert ids == sorted(ids) == [3, 5, 7, 9]


def test_page_reaches_stealth_device_with_services():
    pager = make_device(1)
    hidden = make_device(
        2, mode=VisibilityMode.STEALTH, position=(10.0, 0.0), services=("file-transfer",)
    )
    result = page(pager, DeviceId(2), [pager, hidden], 0)
    assert result.reached
    assert result.services == ("file-transfer",)
    # the discovery patches are untouched by paging
    assert hidden.hit_counter == 0
    assert hidden.guest_book == []


def test_page_off_device_unreachable():
    pager = make_device(1)
    off = make_device(2, mode=VisibilityMode.OFF, position=(1.0, 0.0))
    assert not page(pager, DeviceId(2), [pager, off], 0).reached


def test_page_out_of_range_unreachable():
    pager = make_device(1)
    far = make_device(2, position=(150.0, 0.0))
    assert not page(pager, DeviceId(2), [pager, far], 0).reached


def test_zero_effective_range_silences_discovery_and_paging():
    scanner = make_device(1)
    muted = make_device(2, position=(0.0, 0.0), knob=0.0)
    assert inquiry(scanner, [scanner, muted], 0) == []
    assert not page(scanner, DeviceId(2), [scanner, muted], 0).reached


def test_set_mode_changes_only_mode():
    dev = make_device(2)
    dev.hit_counter = 3
    set_mode(dev, VisibilityMode.STEALTH)
    assert dev.desc.mode is VisibilityMode.STEALTH
    assert dev.hit_counter == 3
    scanner = make_device(1)
    assert inquiry(scanner, [scanner, dev], 0) == []
    set_mode(dev, VisibilityMode.STEALTH)  # identity
    assert dev.desc.mode is VisibilityMode.STEALTH
    set_mode(dev, VisibilityMode.DISCOVERABLE)  # re-enable
    assert len(inquiry(scanner, [scanner, dev], 1)) == 1


def test_counters_fresh_device():
    dev = make_device(2)
    assert read_hit_counter(dev) == 0
    assert read_guest_book(dev) == []


def test_counters_after_three_discoveries():
    scanner = make_device(1)
    dev = make_device(2, position=(10.0, 0.0))
    for tick in (10, 20, 30):
        inquiry(scanner, [scanner, dev], tick)
    assert read_hit_counter(dev) == 3
    assert read_guest_book(dev) == [(DeviceId(1), 10), (DeviceId(1), 20), (DeviceId(1), 30)]


def test_counters_unchanged_by_page():
    scanner = make_device(1)
    dev = make_device(2, position=(10.0, 0.0))
    inquiry(scanner, [scanner, dev], 10)
    page(scanner, DeviceId(2), [scanner, dev], 11)
    assert read_hit_counter(dev) == 1
    assert read_guest_book(dev) == [(DeviceId(1), 10)]


def test_piconet_master_plus_seven():
    net = form_piconet(DeviceId(0), [DeviceId(v) for v in range(1, 8)])
    assert len(net.slaves) == 7


def test_piconet_capacity_error():
    with pytest.raises(PiconetError):
        form_piconet(DeviceId(0), [DeviceId(v) for v in range(1, 9)])


def test_piconet_degenerate_ok():
    assert form_piconet(DeviceId(0), []).slaves == ()


def test_piconet_duplicate_error():
    with pytest.raises(PiconetError):
        form_piconet(DeviceId(0), [DeviceId(1), DeviceId(1)])
    with pytest.raises(PiconetError):
        form_piconet(DeviceId(0), [DeviceId(0)])


def _random_world(rnd: random.Random):
    world = []
    for value in range(2, 2 + rnd.randint(1, 8)):
        world.append(
            make_device(
                value,
                mode=rnd.choice(list(VisibilityMode)),
                position=(rnd.uniform(-150, 150), rnd.uniform(-150, 150)),
                powered=rnd.random() < 0.9,
            )
        )
    return world


def test_property_inquiry_never_returns_hidden_devices():
    rnd = random.Random(31337)
    for _ in range(200):
        scanner = make_device(1)
        world = [scanner] + _random_world(rnd)
        for resp in inquiry(scanner, world, 0):
            responder = next(d for d in world if d.desc.id == resp.responder_id)
            assert responder.desc.mode is VisibilityMode.DISCOVERABLE
            assert responder.powered


def test_property_page_succeeds_iff_powered_not_off_in_range():
    rnd = random.Random(225)
    for _ in range(200):
        pager = make_device(1)
        world = [pager] + _random_world(rnd)
        for dev in world[1:]:
            reached = page(pager, dev.desc.id, world, 0).reached
            dx = dev.position[0] - pager.position[0]
            dy = dev.position[1] - pager.position[1]
            expected = (
                dev.powered
                and dev.desc.mode is not VisibilityMode.OFF
                and (dx * dx + dy * dy) ** 0.5 <= 100.0
            )
            assert reached == expected


def test_property_hit_counter_equals_emitted_responses_and_book_length():
    rnd = random.Random(99)
    for _ in range(50):
        scanner = make_device(1)
        world = [scanner] + _random_world(rnd)
        emitted = {d.desc.id.value: 0 for d in world[1:]}
        for tick in range(10):
            for resp in inquiry(scanner, world, tick):
                emitted[resp.responder_id.value] += 1
        for dev in world[1:]:
            assert dev.hit_counter == emitted[dev.desc.id.value]
            assert len(dev.guest_book) == dev.hit_counter


def test_property_identical_snapshots_identical_responses():
    rnd = random.Random(404)
    for _ in range(50):
        scanner_a = make_device(1)
        scanner_b = make_device(1)
        spec = [
            (v, rnd.uniform(-120, 120), rnd.uniform(-120, 120))
            for v in range(2, 2 + rnd.randint(1, 6))
        ]
        world_a = [scanner_a] + [make_device(v, position=(x, y)) for v, x, y in spec]
        world_b = [scanner_b] + [make_device(v, position=(x, y)) for v, x, y in spec]
        assert inquiry(scanner_a, world_a, 3) == inquiry(scanner_b, world_b, 3)

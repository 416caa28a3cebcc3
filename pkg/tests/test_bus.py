from __future__ import annotations

import math
import random

import pytest

from robosync import bus as mbus
from robosync.config import SafetyCheckSpec


def _bus_with_topics():
    bus = mbus.MessageBus()
    bus.create_topic("touch", mbus.Layer.SENSOR, producer="sensor")
    bus.create_topic("touch_proc", mbus.Layer.PROCESSING, producer="proc")
    bus.create_topic("arms_cmd", mbus.Layer.BEHAVIOR, producer="rules")
    return bus


# ---------------------------------------------------------------------------
# subscribe


def test_adjacent_subscription_allowed():
    bus = _bus_with_topics()
    sub = bus.subscribe("touch", mbus.Layer.PROCESSING)
    assert sub.topic.name == "touch"


def test_skipping_layers_rejected():
    bus = _bus_with_topics()
    with pytest.raises(mbus.LayeringError) as exc:
        bus.subscribe("touch", mbus.Layer.CONTROL)
    assert exc.value.producer_layer is mbus.Layer.SENSOR
    assert exc.value.subscriber_layer is mbus.Layer.CONTROL


def test_reversed_direction_rejected():
    bus = _bus_with_topics()
    with pytest.raises(mbus.LayeringError):
        bus.subscribe("arms_cmd", mbus.Layer.PROCESSING)
    with pytest.raises(mbus.LayeringError):
        bus.subscribe("touch_proc", mbus.Layer.SENSOR)


def test_same_layer_rejected():
    bus = _bus_with_topics()
    with pytest.raises(mbus.LayeringError):
        bus.subscribe("touch", mbus.Layer.SENSOR)


def test_unknown_topic():
    bus = _bus_with_topics()
    with pytest.raises(mbus.UnknownTopicError):
        bus.subscribe("ghost", mbus.Layer.PROCESSING)


def test_duplicate_topic_rejected():
    bus = _bus_with_topics()
    with pytest.raises(mbus.DuplicateTopicError):
        bus.create_topic("touch", mbus.Layer.SENSOR, producer="other")


# ---------------------------------------------------------------------------
# publish


def test_publish_without_subscribers_still_sequences():
    bus = _bus_with_topics()
    message = bus.publish("touch", 1.0, 10, publisher="sensor")
    assert message.seq == 0
    assert bus.deliveries == []


def test_fanout_delivers_identical_message():
    bus = _bus_with_topics()
    sub_a = bus.subscribe("touch", mbus.Layer.PROCESSING)
    sub_b = bus.subscribe("touch", mbus.Layer.PROCESSING)
    message = bus.publish("touch", 4.2, 5, publisher="sensor")
    assert list(sub_a.pending) == [message]
    assert list(sub_b.pending) == [message]
    assert sub_a.pending[0].seq == sub_b.pending[0].seq == 0


def test_foreign_publisher_rejected():
    bus = _bus_with_topics()
    with pytest.raises(mbus.ForeignPublisherError):
        bus.publish("touch", 1.0, 0, publisher="impostor")


def test_global_seq_strictly_increasing_and_gap_free():
    bus = _bus_with_topics()
    seqs = [bus.publish("touch", float(i), i, publisher="sensor").seq for i in range(20)]
    assert seqs == list(range(20))


def test_interleaved_publishes_preserve_global_order():
    # Reference implementation: one flat list of (seq, topic, payload).
    bus = mbus.MessageBus()
    bus.create_topic("a", mbus.Layer.SENSOR, producer="p")
    bus.create_topic("b", mbus.Layer.SENSOR, producer="p")
    sub_a = bus.subscribe("a", mbus.Layer.PROCESSING)
    sub_b = bus.subscribe("b", mbus.Layer.PROCESSING)

    reference: list[tuple[int, str, float]] = []
    rng = random.Random(11)
    for i in range(200):
        topic = rng.choice(("a", "b"))
        message = bus.publish(topic, float(i), i, publisher="p")
        reference.append((message.seq, topic, float(i)))

    for sub, name in ((sub_a, "a"), (sub_b, "b")):
        expected = [(s, p) for s, t, p in reference if t == name]
        got = [(m.seq, m.payload) for m in sub.pending]
        assert got == expected
        assert got == sorted(got)  # subsequence of global order


def test_handler_invoked_in_subscription_order():
    bus = _bus_with_topics()
    calls: list[str] = []
    bus.subscribe("touch", mbus.Layer.PROCESSING, lambda m: calls.append("first"))
    bus.subscribe("touch", mbus.Layer.PROCESSING, lambda m: calls.append("second"))
    bus.publish("touch", 0.0, 0, publisher="sensor")
    assert calls == ["first", "second"]


def test_publish_time_must_not_regress():
    bus = _bus_with_topics()
    bus.publish("touch", 1.0, 100, publisher="sensor")
    with pytest.raises(mbus.BusError, match="before bus time"):
        bus.publish("touch", 2.0, 50, publisher="sensor")


# ---------------------------------------------------------------------------
# safety


CHECK = SafetyCheckSpec(name="overforce", sensor="force", threshold=10.0)


def test_exceedance_halts():
    alert = mbus.evaluate_safety(12.0, CHECK, 7)
    assert alert.decision is mbus.Decision.ALERT_AND_HALT
    assert alert.check == "overforce"
    assert alert.t_us == 7


def test_boundary_continues():
    assert mbus.evaluate_safety(10.0, CHECK, 0).decision is mbus.Decision.CONTINUE


def test_well_below_continues():
    assert mbus.evaluate_safety(3.0, CHECK, 0).decision is mbus.Decision.CONTINUE


def test_safety_matches_direct_predicate_on_randomized_inputs():
    rng = random.Random(3)
    readings = [rng.uniform(-1e6, 1e6) for _ in range(500)]
    readings += [10.0, math.nextafter(10.0, math.inf), math.nextafter(10.0, -math.inf), float("inf"), -float("inf")]
    for reading in readings:
        expected = reading > CHECK.threshold
        got = mbus.evaluate_safety(reading, CHECK, 0).decision is mbus.Decision.ALERT_AND_HALT
        assert got == expected


def test_broadcast_alert_reaches_every_layer():
    bus = _bus_with_topics()
    alert = mbus.evaluate_safety(99.0, CHECK, 5)
    bus.broadcast_alert(alert)
    layers = [d.subscriber_layer for d in bus.deliveries]
    assert layers == list(mbus.Layer)
    assert all(d.safety for d in bus.deliveries)

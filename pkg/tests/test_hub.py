import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridloop.hub.core import Hub, Measurement
from gridloop.hub.protocol import Command, Frame, MalformedFrame, encode_frame, topic_matches
from gridloop.netem import DelayModel
from gridloop.scheduler import Scheduler
from gridloop.transport import HubClient, VirtualNetwork

from strategies import patterns, topics


def m(topic, value, seq=1, ts=0):
    return Measurement(topic, value, ts, seq)


def test_read_your_write():
    hub = Hub()
    hub.set("pv/power", m("pv/power", 3500.0, seq=1, ts=1_000_000))
    assert hub.get("pv/power").value == 3500.0
    hub.set("pv/power", m("pv/power", 3600.0, seq=2))
    assert hub.get("pv/power").seq == 2
    assert hub.get("pv/other") is None


def test_publish_stores_last_value():
    hub = Hub()
    assert hub.get("x") is None
    hub.set("x", m("x", 1.0))
    assert hub.get("x").value == 1.0
    hub.publish("x", m("x", 2.0))
    assert hub.get("x").value == 2.0


def test_fanout_counts():
    hub = Hub()
    assert hub.publish("prismes/pv/power", m("prismes/pv/power", 1.0)) == 0
    c = hub.connect()
    hub.subscribe(c, "prismes/*/power")
    assert hub.publish("prismes/pv/power", m("prismes/pv/power", 5.0, seq=3, ts=7)) == 1
    got = Measurement.from_frame(c.received.popleft())
    assert (got.topic, got.value, got.seq, got.source_ts) == ("prismes/pv/power", 5.0, 3, 7)
    hub.subscribe(c, "prismes/pv/*")
    assert hub.publish("prismes/pv/power", m("prismes/pv/power", 6.0)) == 2
    assert len(c.received) == 2


def test_unsubscribe_and_depth():
    hub = Hub()
    c = hub.connect()
    hub.subscribe(c, "a/*")
    hub.publish("a/b", m("a/b", 1.0))
    hub.publish("a/b/c", m("a/b/c", 1.0))
    assert len(c.received) == 1
    hub.unsubscribe(c, "a/*")
    hub.publish("a/b", m("a/b", 1.0))
    assert len(c.received) == 1


def test_wire_replies():
    hub = Hub(clock=lambda: 42)
    c = hub.connect()
    for line in [b"GET nothing\n", b"SET k 1 2 3.5\n", b"GET k\n", b"PUB k 2 3 4.5\n", b"SUB k\n", b"PING\n", b"junk\n", b"MSG k 1 1 1\n"]:
        hub.handle_bytes(c, line)
    got = [encode_frame(f) for f in c.received]
    assert got == [
        b"ERR nokey\n",
        b"OK\n",
        b"MSG k 1 2 3.5\n",
        b"OK 0\n",
        b"OK\n",
        b"PONG 42\n",
        b"ERR malformed\n",
        b"ERR badcmd\n",
    ]


ops = st.lists(
    st.tuples(st.sampled_from(["set", "pub", "get"]), st.sampled_from(["k1", "k2", "a/k"]), st.floats(-1e6, 1e6)),
    max_size=60,
)


@given(ops)
def test_read_your_write_random(seq_ops):
    hub = Hub()
    model: dict[str, float] = {}
    for i, (op, key, value) in enumerate(seq_ops):
        if op == "get":
            got = hub.get(key)
            assert (got.value if got else None) == model.get(key)
        else:
            (hub.set if op == "set" else hub.publish)(key, m(key, value, seq=i))
            model[key] = value


@given(
    st.lists(st.lists(patterns, max_size=3, unique=True), min_size=1, max_size=4),
    st.lists(topics, min_size=1, max_size=20),
)
def test_fanout_exact_and_fifo(subs, published):
    hub = Hub()
    conns = []
    for pats in subs:
        c = hub.connect()
        for p in pats:
            hub.subscribe(c, p)
        conns.append((c, pats))
    for seq, t in enumerate(published):
        expected = sum(topic_matches(p, t) for _, pats in conns for p in pats)
        assert hub.publish(t, m(t, float(seq), seq=seq)) == expected
    for c, pats in conns:
        want = [seq for seq, t in enumerate(published) for p in pats if topic_matches(p, t)]
        assert [f.seq for f in c.received] == want


def test_bad_topic_on_api():
    hub = Hub()
    with pytest.raises(MalformedFrame):
        hub.publish("bad topic", m("bad topic", 1.0))


# -- ping through the virtual network --------------------------------------------

def _ping_rtts(model, n, seed=0, period_us=1_000_000):
    sched = Scheduler()
    net = VirtualNetwork(sched, seed)
    client = HubClient(net.attach("pinger", model, "wan"))
    rtts = []
    for k in range(n):
        sched.call_at(k * period_us, client.ping, rtts.append)
    sched.run()
    return rtts


def test_ping_zero_delay():
    assert _ping_rtts(DelayModel.zero(), 3) == [0, 0, 0]


def test_ping_deterministic_32ms():
    model = DelayModel(base_ms=32, jitter_std_ms=0, spike_prob=0)
    assert _ping_rtts(model, 5) == [64_000] * 5


def test_ping_calibrated_mean():
    rtts = _ping_rtts(DelayModel(), 10_000, seed=3)
    assert 60.0 <= np.mean(rtts) / 1000 <= 68.0


def test_virtual_get_roundtrip():
    sched = Scheduler()
    net = VirtualNetwork(sched)
    writer = HubClient(net.attach("w"))
    reader = HubClient(net.attach("r"))
    out = []
    writer.set("pv/power", 12.5, 1, 0)
    sched.call_at(10, reader.get, "pv/power", out.append)
    sched.call_at(10, reader.get, "nope", out.append)
    sched.run()
    assert out[0].value == 12.5 and out[1] is None

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridloop.hub.protocol import (
    MAX_FRAME_BYTES,
    Command,
    Frame,
    MalformedFrame,
    encode_frame,
    parse_frame,
    topic_matches,
)

from strategies import frames


def test_pub_example():
    f = parse_frame(b"PUB prismes/pv/power 17 1000000 3512.5\n")
    assert f == Frame(Command.PUB, topic="prismes/pv/power", seq=17, ts=1000000, payload=3512.5)


def test_bare_commands():
    assert parse_frame(b"PING\n") == Frame(Command.PING)
    assert encode_frame(Frame(Command.OK)) == b"OK\n"
    assert encode_frame(Frame(Command.PONG, ts=2000000)) == b"PONG 2000000\n"
    assert parse_frame(b"OK 3\n").count == 3


@pytest.mark.parametrize(
    "line",
    [
        b"PUB bad topic! 1 1 0\n",
        b"PUB a/b 1 1 0",  # no terminator
        b"PUB a//b 1 1 0\n",
        b"PUB a/b -1 1 0\n",
        b"PUB a/b 01 1 0\n",
        b"PUB a/b 1 1 nan\n",
        b"PUB a/b 1 1 1e999\n",
        b"SET a/* 1 1 0\n",
        b"GET \n",
        b"PING now\n",
        b"HELLO\n",
        b"ERR two words\n",
        b"MSG a 1 1 \"\\ud800\"\n",
        b"\xff\xfe\n",
        b"SUB a\r\n",
        b"PUB a 18446744073709551616 0 1\n",
    ],
)
def test_rejects(line):
    with pytest.raises(MalformedFrame):
        parse_frame(line)


def test_length_limit():
    body = b"PUB a 1 1 \"" + b"x" * MAX_FRAME_BYTES + b"\"\n"
    with pytest.raises(MalformedFrame):
        parse_frame(body)


def test_string_payload_keeps_spaces():
    f = parse_frame(b'SET agents/1/x 1 5 "3:0.25 extra"\n')
    assert f.payload == "3:0.25 extra"


def test_wildcard_single_segment():
    assert topic_matches("a/*", "a/b")
    assert not topic_matches("a/*", "a/b/c")
    assert not topic_matches("a/*", "a")
    assert topic_matches("*/x/*", "p/x/q")


@settings(max_examples=1000)
@given(frames())
def test_parse_encode_identity(frame):
    data = encode_frame(frame)
    assert parse_frame(data) == frame
    # canonical bytes survive the other way round as well
    assert encode_frame(parse_frame(data)) == data


def _fuzz_lines(n, seed):
    rng = random.Random(seed)
    words = [b"SET", b"GET", b"PUB", b"SUB", b"UNSUB", b"PING", b"OK", b"ERR", b"MSG", b"PONG", b"a/b", b"*", b"1", b"-0.5", b'"x"', b" "]
    for _ in range(n):
        kind = rng.random()
        if kind < 0.4:
            line = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 64)))
        elif kind < 0.9:
            line = b" ".join(rng.choice(words) for _ in range(rng.randint(0, 6)))
        else:
            line = bytes(rng.getrandbits(8) for _ in range(rng.randint(4000, 4200)))
        if rng.random() < 0.8:
            line += b"\n"
        yield line


def test_fuzz_never_crashes():
    ok = bad = 0
    for line in _fuzz_lines(100_000, seed=7):
        try:
            parse_frame(line)
            ok += 1
        except MalformedFrame:
            bad += 1
    assert ok + bad == 100_000
    assert ok > 0  # the token soup produces some valid frames too


@given(st.binary(max_size=200))
def test_parse_total_on_arbitrary_bytes(data):
    try:
        frame = parse_frame(data)
    except MalformedFrame:
        return
    assert isinstance(frame, Frame)

"""Line-oriented text protocol spoken between the hub and its clients.

One frame per UTF-8 line, fields separated by a single space::

    SET <topic> <seq> <ts_us> <value>      -> OK
    GET <topic>                            -> MSG ... | ERR nokey
    PUB <topic> <seq> <ts_us> <value>      -> OK <count>
    SUB <pattern> / UNSUB <pattern>        -> OK
    PING                                   -> PONG <server_ts_us>

``<value>`` is either a decimal float or a JSON-style double-quoted string.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

MAX_FRAME_BYTES = 4096
MAX_SEQ = 2**64 - 1
MAX_TS = 2**63 - 1

_SEGMENT = r"[A-Za-z0-9_-]+"
TOPIC_RE = re.compile(rf"{_SEGMENT}(?:/{_SEGMENT})*")
PATTERN_RE = re.compile(rf"(?:{_SEGMENT}|\*)(?:/(?:{_SEGMENT}|\*))*")
_UINT_RE = re.compile(r"0|[1-9][0-9]*")
_FLOAT_RE = re.compile(r"-?[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_REASON_RE = re.compile(r"[A-Za-z0-9_-]+")


class MalformedFrame(ValueError):
    """Protocol violation; the connection answers ``ERR`` and keeps going."""


class Command(str, enum.Enum):
    SET = "SET"
    GET = "GET"
    PUB = "PUB"
    SUB = "SUB"
    UNSUB = "UNSUB"
    PING = "PING"
    OK = "OK"
    ERR = "ERR"
    MSG = "MSG"
    PONG = "PONG"


# commands carrying <topic> <seq> <ts_us> <value>
_VALUE_COMMANDS = frozenset({Command.SET, Command.PUB, Command.MSG})


@dataclass(frozen=True)
class Frame:
    command: Command
    topic: str | None = None
    seq: int | None = None
    ts: int | None = None
    payload: float | str | None = None
    count: int | None = None
    reason: str | None = None


def is_topic(text: str) -> bool:
    return TOPIC_RE.fullmatch(text) is not None


def is_pattern(text: str) -> bool:
    return PATTERN_RE.fullmatch(text) is not None


def topic_matches(pattern: str, topic: str) -> bool:
    """``*`` matches exactly one path segment."""
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    if len(p_parts) != len(t_parts):
        return False
    return all(p == "*" or p == t for p, t in zip(p_parts, t_parts))


def _uint(token: str, limit: int, what: str) -> int:
    if not _UINT_RE.fullmatch(token):
        raise MalformedFrame(f"non-numeric {what}: {token!r}")
    value = int(token)
    if value > limit:
        raise MalformedFrame(f"{what} out of range")
    return value


def _payload(token: str) -> float | str:
    if token.startswith('"'):
        try:
            value = json.loads(token)
        except ValueError as exc:
            raise MalformedFrame("bad string payload") from exc
        if not isinstance(value, str):
            raise MalformedFrame("bad string payload")
        try:
            value.encode("utf-8")
        except UnicodeEncodeError as exc:  # lone surrogate escapes
            raise MalformedFrame("bad string payload") from exc
        return value
    if not _FLOAT_RE.fullmatch(token):
        raise MalformedFrame(f"bad numeric payload: {token!r}")
    value = float(token)
    if value != value or value in (float("inf"), float("-inf")):
        raise MalformedFrame("non-finite payload")
    return value


def parse_frame(data: bytes) -> Frame:
    """Parse one newline-terminated frame.

    Raises MalformedFrame for anything outside the grammar; never raises
    anything else.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise MalformedFrame("frame must be bytes")
    if len(data) > MAX_FRAME_BYTES:
        raise MalformedFrame("frame too long")
    if not data.endswith(b"\n"):
        raise MalformedFrame("missing newline terminator")
    try:
        line = bytes(data[:-1]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFrame("invalid utf-8") from exc
    if "\n" in line or "\r" in line:
        raise MalformedFrame("embedded line break")

    head, _, rest = line.partition(" ")
    try:
        command = Command(head)
    except ValueError:
        raise MalformedFrame(f"unknown command: {head[:32]!r}") from None

    if command in _VALUE_COMMANDS:
        parts = rest.split(" ", 3)
        if len(parts) != 4:
            raise MalformedFrame(f"{command.value} expects 4 fields")
        topic, seq, ts, payload = parts
        if not is_topic(topic):
            raise MalformedFrame(f"malformed topic: {topic[:64]!r}")
        return Frame(
            command,
            topic=topic,
            seq=_uint(seq, MAX_SEQ, "seq"),
            ts=_uint(ts, MAX_TS, "ts"),
            payload=_payload(payload),
        )

    if command is Command.GET:
        if not is_topic(rest):
            raise MalformedFrame(f"malformed topic: {rest[:64]!r}")
        return Frame(command, topic=rest)

    if command in (Command.SUB, Command.UNSUB):
        if not is_pattern(rest):
            raise MalformedFrame(f"malformed pattern: {rest[:64]!r}")
        return Frame(command, topic=rest)

    if command is Command.PING:
        if line != "PING":
            raise MalformedFrame("PING takes no arguments")
        return Frame(command)

    if command is Command.PONG:
        return Frame(command, ts=_uint(rest, MAX_TS, "ts"))

    if command is Command.OK:
        if line == "OK":
            return Frame(command)
        return Frame(command, count=_uint(rest, MAX_SEQ, "count"))

    # ERR
    if not _REASON_RE.fullmatch(rest):
        raise MalformedFrame("malformed error reason")
    return Frame(command, reason=rest)


def _encode_payload(payload: float | str) -> str:
    if isinstance(payload, str):
        return json.dumps(payload, ensure_ascii=False)
    return repr(float(payload))


def encode_frame(frame: Frame) -> bytes:
    """Canonical single-line encoding; floats use shortest round-trip repr."""
    cmd = frame.command
    if cmd in _VALUE_COMMANDS:
        text = f"{cmd.value} {frame.topic} {frame.seq} {frame.ts} {_encode_payload(frame.payload)}"
    elif cmd in (Command.GET, Command.SUB, Command.UNSUB):
        text = f"{cmd.value} {frame.topic}"
    elif cmd is Command.PONG:
        text = f"PONG {frame.ts}"
    elif cmd is Command.OK:
        text = "OK" if frame.count is None else f"OK {frame.count}"
    elif cmd is Command.ERR:
        text = f"ERR {frame.reason}"
    else:
        text = cmd.value
    return (text + "\n").encode("utf-8")

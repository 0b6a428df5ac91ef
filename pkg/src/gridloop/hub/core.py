"""Whiteboard hub: topic pub/sub plus a last-value store.

The hub is a synchronous state machine. Transports (the in-process virtual
network, or the asyncio socket server) feed it frames one at a time, which
gives the single total order over SET/PUB/GET the rest of the system relies on.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .protocol import Command, Frame, MalformedFrame, is_pattern, is_topic, parse_frame, topic_matches


@dataclass(frozen=True)
class Measurement:
    topic: str
    value: float | str
    source_ts: int
    seq: int
    source_id: str = ""

    def to_frame(self, command: Command = Command.MSG) -> Frame:
        return Frame(command, topic=self.topic, seq=self.seq, ts=self.source_ts, payload=self.value)

    @classmethod
    def from_frame(cls, frame: Frame, source_id: str = "") -> Measurement:
        return cls(frame.topic, frame.payload, frame.ts, frame.seq, source_id)


class Connection:
    """Hub-side view of one client.

    Frames addressed to the client go through ``deliver``; by default they are
    queued on ``received`` so the hub can be driven directly in tests.
    """

    _ids = itertools.count(1)

    def __init__(self, name: str = "", deliver: Callable[[Frame], None] | None = None):
        self.id = next(self._ids)
        self.name = name or f"conn{self.id}"
        self.received: deque[Frame] = deque()
        self.deliver = deliver or self.received.append
        self.patterns: dict[str, None] = {}  # insertion-ordered set

    def __repr__(self) -> str:
        return f"Connection({self.name!r})"


class Hub:
    def __init__(self, clock: Callable[[], int] = lambda: 0):
        self.clock = clock
        self._store: dict[str, Measurement] = {}
        self._connections: list[Connection] = []

    # -- connections -------------------------------------------------------
    def connect(self, name: str = "", deliver: Callable[[Frame], None] | None = None) -> Connection:
        conn = Connection(name, deliver)
        self._connections.append(conn)
        return conn

    def disconnect(self, conn: Connection) -> None:
        if conn in self._connections:
            self._connections.remove(conn)
        conn.patterns.clear()

    # -- whiteboard operations ---------------------------------------------
    def set(self, key: str, m: Measurement) -> None:
        """Store ``m`` under ``key`` and fan it out like a publish."""
        self._fanout(key, m)

    def get(self, key: str) -> Measurement | None:
        if not is_topic(key):
            raise MalformedFrame(f"malformed topic: {key!r}")
        return self._store.get(key)

    def publish(self, topic: str, m: Measurement) -> int:
        """Returns the number of matching subscriptions (one MSG each)."""
        return self._fanout(topic, m)

    def subscribe(self, conn: Connection, pattern: str) -> None:
        if not is_pattern(pattern):
            raise MalformedFrame(f"malformed pattern: {pattern!r}")
        conn.patterns.setdefault(pattern)

    def unsubscribe(self, conn: Connection, pattern: str) -> None:
        if not is_pattern(pattern):
            raise MalformedFrame(f"malformed pattern: {pattern!r}")
        conn.patterns.pop(pattern, None)

    def ping(self) -> int:
        return self.clock()

    def _fanout(self, topic: str, m: Measurement) -> int:
        if not is_topic(topic):
            raise MalformedFrame(f"malformed topic: {topic!r}")
        if m.topic != topic:
            m = Measurement(topic, m.value, m.source_ts, m.seq, m.source_id)
        self._store[topic] = m
        frame = m.to_frame()
        count = 0
        for conn in self._connections:
            for pattern in conn.patterns:
                if topic_matches(pattern, topic):
                    conn.deliver(frame)
                    count += 1
        return count

    # -- wire entry point ----------------------------------------------------
    def handle(self, conn: Connection, frame: Frame) -> None:
        """Apply one client frame and send the reply to ``conn``."""
        cmd = frame.command
        if cmd is Command.SET:
            self.set(frame.topic, Measurement.from_frame(frame, conn.name))
            conn.deliver(Frame(Command.OK))
        elif cmd is Command.PUB:
            count = self.publish(frame.topic, Measurement.from_frame(frame, conn.name))
            conn.deliver(Frame(Command.OK, count=count))
        elif cmd is Command.GET:
            m = self.get(frame.topic)
            conn.deliver(m.to_frame() if m is not None else Frame(Command.ERR, reason="nokey"))
        elif cmd is Command.SUB:
            self.subscribe(conn, frame.topic)
            conn.deliver(Frame(Command.OK))
        elif cmd is Command.UNSUB:
            self.unsubscribe(conn, frame.topic)
            conn.deliver(Frame(Command.OK))
        elif cmd is Command.PING:
            conn.deliver(Frame(Command.PONG, ts=self.ping()))
        else:
            conn.deliver(Frame(Command.ERR, reason="badcmd"))

    def handle_bytes(self, conn: Connection, data: bytes) -> None:
        try:
            frame = parse_frame(data)
        except MalformedFrame:
            conn.deliver(Frame(Command.ERR, reason="malformed"))
            return
        self.handle(conn, frame)

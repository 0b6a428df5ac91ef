"""Client-side plumbing shared by every component.

A *port* is a component's attachment to the hub: it knows the current time,
can schedule callbacks, and sends/receives frames through a pair of emulated
links (uplink to the hub, downlink back). ``VirtualPort`` runs on the
discrete-event scheduler; ``AsyncPort`` runs over a TCP socket on an asyncio
loop. Components only see the port interface, so the same component code
runs in both modes.
"""
from __future__ import annotations

import asyncio
from collections import deque
from typing import Any, Callable

from .hub.core import Hub, Measurement
from .hub.protocol import Command, Frame, encode_frame, parse_frame
from .netem import DelayModel, Link, make_rng
from .scheduler import PRIO_DELIVERY, Scheduler


class ConnectTimeout(ConnectionError):
    pass


class VirtualNetwork:
    """In-process hub plus per-connection emulated links, all on one scheduler."""

    def __init__(self, scheduler: Scheduler, seed: int = 0):
        self.scheduler = scheduler
        self.seed = seed
        self.hub = Hub(clock=lambda: scheduler.now)
        self.links: dict[str, list[Link]] = {}

    def attach(self, name: str, model: DelayModel | None = None, link_name: str = "direct") -> VirtualPort:
        model = model or DelayModel.zero()
        up = Link(model, make_rng(self.seed, "link", link_name, name, "up"), f"{link_name}:{name}:up")
        down = Link(model, make_rng(self.seed, "link", link_name, name, "down"), f"{link_name}:{name}:down")
        self.links.setdefault(link_name, []).extend([up, down])
        return VirtualPort(self, name, up, down)


class VirtualPort:
    def __init__(self, net: VirtualNetwork, name: str, up: Link, down: Link):
        self.net = net
        self.name = name
        self.up = up
        self.down = down
        self.handler: Callable[[Frame], None] | None = None
        self.conn = net.hub.connect(name, deliver=self._from_hub)

    def now(self) -> int:
        return self.net.scheduler.now

    def call_at(self, t_us: int, fn: Callable[..., Any], *args: Any, priority: int = PRIO_DELIVERY) -> None:
        self.net.scheduler.call_at(t_us, fn, *args, priority=priority)

    def send(self, frame: Frame) -> None:
        data = encode_frame(frame)
        t = self.up.deliver(self.now())
        self.net.scheduler.call_at(t, self.net.hub.handle_bytes, self.conn, data)

    def _from_hub(self, frame: Frame) -> None:
        data = encode_frame(frame)
        t = self.down.deliver(self.now())
        self.net.scheduler.call_at(t, self._receive, data)

    def _receive(self, data: bytes) -> None:
        if self.handler is not None:
            self.handler(parse_frame(data))


class AsyncPort:
    """TCP attachment to a running hub server, paced by the asyncio loop clock."""

    def __init__(self, name: str, reader, writer, up: Link, down: Link, t0: float):
        self.name = name
        self.up = up
        self.down = down
        self.t0 = t0
        self.handler: Callable[[Frame], None] | None = None
        self._reader = reader
        self._writer = writer
        self._loop = asyncio.get_running_loop()
        self._task = self._loop.create_task(self._read_loop())

    @classmethod
    async def open(
        cls,
        host: str,
        port: int,
        name: str,
        up: Link,
        down: Link,
        t0: float,
        timeout: float = 5.0,
    ) -> AsyncPort:
        loop = asyncio.get_running_loop()
        deadline = loop.time() + timeout
        while True:
            try:
                remaining = max(0.01, deadline - loop.time())
                reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), remaining)
                return cls(name, reader, writer, up, down, t0)
            except (OSError, asyncio.TimeoutError):
                if loop.time() >= deadline:
                    raise ConnectTimeout(f"{name}: hub at {host}:{port} unreachable after {timeout} s") from None
                await asyncio.sleep(0.1)

    def now(self) -> int:
        return int((self._loop.time() - self.t0) * 1e6)

    def call_at(self, t_us: int, fn: Callable[..., Any], *args: Any, priority: int = 0) -> None:
        self._loop.call_at(self.t0 + t_us / 1e6, fn, *args)

    def send(self, frame: Frame) -> None:
        data = encode_frame(frame)
        t = self.up.deliver(self.now())
        self.call_at(t, self._write, data)

    def _write(self, data: bytes) -> None:
        if not self._writer.is_closing():
            self._writer.write(data)

    async def _read_loop(self) -> None:
        while True:
            line = await self._reader.readline()
            if not line:
                return
            t = self.down.deliver(self.now())
            self.call_at(t, self._receive, line)

    def _receive(self, data: bytes) -> None:
        if self.handler is not None:
            self.handler(parse_frame(data))

    async def close(self) -> None:
        self._task.cancel()
        self._writer.close()
        try:
            await self._writer.wait_closed()
        except (ConnectionError, asyncio.CancelledError):
            pass


class HubClient:
    """Request/reply bookkeeping on top of a port.

    Replies are matched to requests in FIFO order, which is valid on ordered
    (stream-mode) links. A MSG answers a pending GET only when it is at the
    head of the queue for the same topic; every other MSG is a subscription
    delivery and goes to ``on_message``. Avoid GET on a topic the same
    connection is subscribed to.
    """

    def __init__(self, port, on_message: Callable[[Measurement], None] | None = None):
        self.port = port
        self.on_message = on_message
        self.errors: list[str] = []
        self._pending: deque[tuple[Command, str | None, int, Callable | None]] = deque()
        port.handler = self._on_frame

    @property
    def name(self) -> str:
        return self.port.name

    def now(self) -> int:
        return self.port.now()

    def _request(self, frame: Frame, callback: Callable | None = None) -> None:
        self._pending.append((frame.command, frame.topic, self.port.now(), callback))
        self.port.send(frame)

    def publish(self, topic: str, value: float | str, seq: int, ts: int, callback=None) -> None:
        self._request(Frame(Command.PUB, topic=topic, seq=seq, ts=ts, payload=value), callback)

    def set(self, topic: str, value: float | str, seq: int, ts: int, callback=None) -> None:
        self._request(Frame(Command.SET, topic=topic, seq=seq, ts=ts, payload=value), callback)

    def get(self, topic: str, callback: Callable[[Measurement | None], None]) -> None:
        self._request(Frame(Command.GET, topic=topic), callback)

    def subscribe(self, pattern: str, callback=None) -> None:
        self._request(Frame(Command.SUB, topic=pattern), callback)

    def unsubscribe(self, pattern: str, callback=None) -> None:
        self._request(Frame(Command.UNSUB, topic=pattern), callback)

    def ping(self, callback: Callable[[int], None]) -> None:
        """``callback(rtt_us)`` on PONG, measured on this side's clock."""
        self._request(Frame(Command.PING), callback)

    def _on_frame(self, frame: Frame) -> None:
        cmd = frame.command
        if cmd is Command.MSG:
            if self._pending and self._pending[0][0] is Command.GET and self._pending[0][1] == frame.topic:
                _, _, _, cb = self._pending.popleft()
                if cb:
                    cb(Measurement.from_frame(frame, "hub"))
            elif self.on_message is not None:
                self.on_message(Measurement.from_frame(frame, "hub"))
            return
        if not self._pending:
            self.errors.append(f"unsolicited {cmd.value}")
            return
        req, _, sent, cb = self._pending.popleft()
        if cmd is Command.ERR:
            if req is Command.GET and frame.reason == "nokey":
                if cb:
                    cb(None)
            else:
                self.errors.append(f"{req.value}: {frame.reason}")
            return
        if cb is None:
            return
        if cmd is Command.PONG:
            cb(self.port.now() - sent)
        elif cmd is Command.OK:
            cb(frame.count)

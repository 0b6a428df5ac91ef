"""SCADA gateway emulation for the remote platform.

Hosts a small hierarchical address space over recorded device profiles,
publishes device telemetry to the hub once per emission period and keeps the
breaker logic local: a breaker command changes what the next emission carries,
nothing else.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from .hub.core import Measurement
from .netem import DelayModel
from .profiles import Profile, sample_hold
from .scheduler import PRIO_DISTURBANCE, PRIO_GATEWAY, Scheduler
from .transport import HubClient, VirtualNetwork

ROOT = "prismes"


class UnknownDevice(KeyError):
    pass


class UnknownNode(KeyError):
    pass


class NodeKind(str, enum.Enum):
    VARIABLE = "variable"
    METHOD = "method"


class Quality(str, enum.Enum):
    GOOD = "good"
    STALE = "stale"


@dataclass
class AddressNode:
    path: str
    kind: NodeKind
    value: Measurement | None = None
    quality: Quality = Quality.STALE


@dataclass(frozen=True)
class BreakerState:
    device_id: str
    closed: bool
    last_change_ts: int = 0


class Gateway:
    """One gateway instance; ``profiles`` are already cropped to the run window."""

    def __init__(
        self,
        profiles: Mapping[str, Profile],
        period_us: int = 1_000_000,
        horizon_us: int = 0,
        disturbances: Iterable[tuple[int, str, str]] = (),
        root: str = ROOT,
    ):
        if period_us <= 0:
            raise ValueError("emission period must be positive")
        self.root = root
        self.profiles = dict(sorted(profiles.items()))
        self.period_us = period_us
        self.horizon_us = horizon_us
        self.disturbances = sorted(disturbances)
        self.breakers = {dev: BreakerState(dev, True, 0) for dev in self.profiles}
        self.emitted: list[Measurement] = []
        self._seq: dict[str, int] = defaultdict(int)
        self._client: HubClient | None = None

        self.nodes: dict[str, AddressNode] = {}
        for dev in self.profiles:
            for leaf, kind in (("power", NodeKind.VARIABLE), ("breaker", NodeKind.METHOD), ("closed", NodeKind.VARIABLE)):
                path = f"{root}/{dev}/{leaf}"
                self.nodes[path] = AddressNode(path, kind)

    # -- address space -------------------------------------------------------
    def resolve(self, path: str) -> AddressNode:
        try:
            return self.nodes[path]
        except KeyError:
            raise UnknownNode(path) from None

    def power_topic(self, device_id: str) -> str:
        return f"{self.root}/{device_id}/power"

    # -- breaker logic ---------------------------------------------------------
    def handle_command(self, cmd: str, device_id: str, ts: int | None = None) -> BreakerState:
        """``cmd`` is ``"open"`` or ``"close"``; idempotent."""
        if device_id not in self.breakers:
            raise UnknownDevice(device_id)
        if cmd not in ("open", "close"):
            raise ValueError(f"unknown breaker command {cmd!r}")
        state = self.breakers[device_id]
        closed = cmd == "close"
        if state.closed != closed:
            now = ts if ts is not None else (self._client.now() if self._client else state.last_change_ts)
            state = BreakerState(device_id, closed, now)
            self.breakers[device_id] = state
        self._ack(state)
        return state

    def _ack(self, state: BreakerState) -> None:
        node = self.nodes[f"{self.root}/{state.device_id}/closed"]
        seq = self._next_seq(node.path)
        node.value = Measurement(node.path, 1.0 if state.closed else 0.0, state.last_change_ts, seq, "gateway")
        node.quality = Quality.GOOD
        if self._client is not None:
            self._client.set(node.path, node.value.value, seq, self._client.now())

    # -- telemetry -------------------------------------------------------------
    def value_at(self, device_id: str, t_us: int) -> float:
        if not self.breakers[device_id].closed:
            return 0.0
        return sample_hold(self.profiles[device_id], t_us)

    def _next_seq(self, topic: str) -> int:
        self._seq[topic] += 1
        return self._seq[topic]

    def emit(self, t_us: int) -> list[Measurement]:
        """Sample every device at ``t_us``, update the address space, publish."""
        out = []
        for dev in self.profiles:
            topic = self.power_topic(dev)
            m = Measurement(topic, float(self.value_at(dev, t_us)), t_us, self._next_seq(topic), "gateway")
            node = self.nodes[topic]
            node.value, node.quality = m, Quality.GOOD
            out.append(m)
            if self._client is not None:
                self._client.publish(topic, m.value, m.seq, m.source_ts)
        self.emitted.extend(out)
        return out

    def emission_times(self) -> range:
        return range(0, self.horizon_us, self.period_us)

    # -- wiring ----------------------------------------------------------------
    def start(self, client: HubClient) -> None:
        """Subscribe to breaker commands and schedule every emission and local disturbance."""
        self._client = client
        client.on_message = self._on_message
        client.subscribe(f"{self.root}/*/breaker")
        port = client.port
        for t, action, target in self.disturbances:
            if t < self.horizon_us:
                cmd = "close" if action == "connect" else "open"
                port.call_at(t, self.handle_command, cmd, target, t, priority=PRIO_DISTURBANCE)
        self._schedule_emission(0)

    def _schedule_emission(self, t: int) -> None:
        if t < self.horizon_us:
            self._client.port.call_at(t, self._emit_and_reschedule, t, priority=PRIO_GATEWAY)

    def _emit_and_reschedule(self, t: int) -> None:
        self.emit(t)
        self._schedule_emission(t + self.period_us)

    def _on_message(self, m: Measurement) -> None:
        parts = m.topic.split("/")
        if len(parts) == 3 and parts[0] == self.root and parts[2] == "breaker" and parts[1] in self.breakers:
            if isinstance(m.value, float):
                self.handle_command("close" if m.value >= 0.5 else "open", parts[1], self._client.now())


def run_emitter(
    profiles: Mapping[str, Profile],
    period_us: int,
    horizon_us: int,
    link: DelayModel | None = None,
    disturbances: Iterable[tuple[int, str, str]] = (),
    seed: int = 0,
) -> list[Measurement]:
    """Run a gateway alone against a fresh virtual hub.

    Returns the emission stream as received by a subscriber on the hub side.
    """
    sched = Scheduler()
    net = VirtualNetwork(sched, seed)
    gw = Gateway(profiles, period_us, horizon_us, disturbances)
    gw.start(HubClient(net.attach("gateway", link, "wan")))
    received: list[Measurement] = []
    sink = net.hub.connect("observer", deliver=lambda f: received.append(Measurement.from_frame(f, "gateway")))
    net.hub.subscribe(sink, f"{ROOT}/*/power")
    sched.run()
    return received

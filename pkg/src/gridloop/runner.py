"""Wires hub, links, gateway, simulator and agents together and runs an experiment."""
from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .gateway import Gateway
from .mas import (
    AgentNode,
    ConvergenceCriterion,
    ConvergenceEvent,
    adjacency_from_edges,
    make_agents,
    metropolis_weights,
)
from .microgrid import Breakers, Disturbance, EssParams, MicrogridSim, MicrogridState, trace_header
from .netem import LatencyStats, Link, make_rng, merge_stats
from .profiles import Profile, crop_window, load_profile, synthetic_building, synthetic_pv
from .scenario import Mode, Scenario
from .scheduler import Scheduler
from .transport import AsyncPort, ConnectTimeout, HubClient, VirtualNetwork

log = logging.getLogger(__name__)


class ComponentCrash(RuntimeError):
    def __init__(self, component: str, t_us: int, cause: BaseException):
        self.component = component
        self.t_us = t_us
        super().__init__(f"{component} failed at t={t_us / 1e6:.6f} s: {cause}")


@dataclass
class RunResult:
    scenario: Scenario
    trace_header: list[str] = field(default_factory=list)
    trace: list[tuple] = field(default_factory=list)
    latency: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    latency_stats: dict[str, LatencyStats] = field(default_factory=dict)
    consensus: list[tuple[int, ConvergenceEvent]] = field(default_factory=list)
    emissions: dict[str, int] = field(default_factory=dict)
    wall_s: float = 0.0

    @property
    def times_s(self) -> list[float]:
        return [row[0] / 1e6 for row in self.trace]

    @property
    def freq(self) -> list[float]:
        return [row[1] for row in self.trace]


# -- component construction ------------------------------------------------------

def scenario_profiles(s: Scenario) -> dict[str, Profile]:
    builtin = {"pv": synthetic_pv, "building": synthetic_building}
    out = {}
    for spec in s.profiles:
        if spec.file is None:
            raw = builtin[spec.device]()
        else:
            raw = load_profile(Path(spec.file).read_text(encoding="utf-8"), spec.device)
        out[spec.device] = crop_window(raw, spec.crop_start_us, spec.crop_end_us)
    return out


def initial_state(s: Scenario) -> MicrogridState:
    m = s.microgrid
    ess = tuple(
        EssParams(i + 1, m.m_droop[i], m.p_set[i], m.p_min[i], m.p_max[i]) for i in range(m.n_ess)
    )
    return MicrogridState(
        ess=ess,
        f=m.initial_f_hz,
        p_load2=m.load2_pu,
        breakers=Breakers(**{t: True for t in m.closed}),
        f_nom=m.f_nom_hz,
        damping_d=m.damping,
        tau_f=m.tau_f_s,
        s_base=m.s_base_w,
    )


def build_gateway(s: Scenario) -> Gateway:
    local = [(d.t_us, d.action, d.target) for d in s.disturbances if d.placement == "gateway"]
    return Gateway(scenario_profiles(s), s.emission_period_us, s.horizon_us, local)


def build_sim(s: Scenario) -> MicrogridSim:
    remote = [Disturbance(d.t_us, d.action, d.target) for d in s.disturbances if d.placement == "sim"]
    return MicrogridSim(initial_state(s), s.microgrid.dt_us, s.horizon_us, s.emission_period_us, remote)


def build_agents(s: Scenario) -> list[AgentNode]:
    n = s.microgrid.n_ess
    a = s.agents
    crit = ConvergenceCriterion(a.eps_hz, a.r, a.max_iter)
    if n == 1:
        W = np.ones((1, 1))
    else:
        W = metropolis_weights(adjacency_from_edges(n, [(i - 1, j - 1) for i, j in a.edges]))
    return [AgentNode(st, crit, s.microgrid.f_nom_hz) for st in make_agents(W, a.k_s)]


def _collect(s: Scenario, result: RunResult, links: dict[str, list[Link]], gw: Gateway, sim: MicrogridSim, agents) -> None:
    result.trace_header = trace_header(s.microgrid.n_ess)
    result.trace = sim.trace
    for name in sorted(links):
        pipes = links[name]
        result.latency[name] = sorted(r for link in pipes for r in link.records)
        result.latency_stats[name] = merge_stats(pipes)
    result.consensus = sorted(
        ((t, ev) for node in agents for t, ev in node.events), key=lambda item: (item[0], item[1].agent)
    )
    counts: dict[str, int] = {}
    for m in gw.emitted:
        dev = m.topic.split("/")[1]
        counts[dev] = counts.get(dev, 0) + 1
    result.emissions = counts


# -- virtual time ------------------------------------------------------------------

def run_virtual(s: Scenario) -> RunResult:
    """Every component on one discrete-event scheduler; bitwise reproducible."""
    start = time.perf_counter()
    sched = Scheduler()
    net = VirtualNetwork(sched, s.seed)

    def attach(name: str, component: str) -> HubClient:
        lname = s.link_for(component)
        return HubClient(net.attach(name, s.link(lname).model(s.seed), lname))

    gw, sim, agents = build_gateway(s), build_sim(s), build_agents(s)
    gw.start(attach("gateway", "gateway"))
    sim.start(attach("sim", "sim"))
    for node in agents:
        node.start(attach(f"agent{node.wire_id}", "agents"))

    try:
        sched.run(until=s.horizon_us)
    except Exception as exc:
        raise ComponentCrash(_culprit(exc), sched.now, exc) from exc

    result = RunResult(s)
    _collect(s, result, net.links, gw, sim, agents)
    result.wall_s = time.perf_counter() - start
    return result


def _culprit(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "orchestrator"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        for comp, key in (("gateway", ".gateway"), ("microgrid-sim", ".microgrid"), ("mas-control", ".mas"), ("signal-hub", ".hub.")):
            if mod.endswith(key) or key in mod:
                name = comp
        tb = tb.tb_next
    return name


# -- wall clock ----------------------------------------------------------------------

def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


class _RealtimeContext:
    def __init__(self, s: Scenario):
        self.s = s
        self.links: dict[str, list[Link]] = {}
        self.ports: list[AsyncPort] = []
        self.errors: list[tuple[str, BaseException]] = []

    async def client(self, name: str, component: str, host: str, port: int, t0: float) -> HubClient:
        s = self.s
        lname = s.link_for(component)
        model = s.link(lname).model(s.seed)
        up = Link(model, make_rng(s.seed, "link", lname, name, "up"))
        down = Link(model, make_rng(s.seed, "link", lname, name, "down"))
        self.links.setdefault(lname, []).extend([up, down])
        p = await AsyncPort.open(host, port, name, up, down, t0, timeout=s.connect_timeout_s)
        self.ports.append(p)
        return HubClient(p)

    async def close(self) -> None:
        for p in self.ports:
            await p.close()


async def run_realtime_async(s: Scenario, components: tuple[str, ...] = ("gateway", "sim", "agents")) -> RunResult:
    """Run the requested components paced to the wall clock.

    When the scenario hub address has port 0 an in-process hub server is
    started on an ephemeral port; otherwise the hub must already be listening.
    """
    from .hub.server import HubServer

    start = time.perf_counter()
    loop = asyncio.get_running_loop()
    ctx = _RealtimeContext(s)

    def on_error(loop_, context):
        exc = context.get("exception") or RuntimeError(context.get("message"))
        ctx.errors.append(("component", exc))

    loop.set_exception_handler(on_error)
    host, port = parse_address(s.hub)
    server = None
    lead = 0.3
    if port == 0:
        server = HubServer()
        host, port = await server.start(host, 0)
    t0 = loop.time() + lead
    if server is not None:
        server.t0 = t0

    gw = build_gateway(s) if "gateway" in components else Gateway({}, s.emission_period_us, 0)
    sim = build_sim(s) if "sim" in components else MicrogridSim(initial_state(s), s.microgrid.dt_us, 0)
    agents = build_agents(s) if "agents" in components else []
    try:
        if "gateway" in components:
            gw.start(await ctx.client("gateway", "gateway", host, port, t0))
        if "sim" in components:
            sim.start(await ctx.client("sim", "sim", host, port, t0))
        for node in agents:
            node.start(await ctx.client(f"agent{node.wire_id}", "agents", host, port, t0))
        end = t0 + s.horizon_us / 1e6
        while loop.time() < end and not ctx.errors:
            await asyncio.sleep(min(0.05, max(0.0, end - loop.time())))
    finally:
        await ctx.close()
        if server is not None:
            await server.stop()
        loop.set_exception_handler(None)
    if ctx.errors:
        comp, exc = ctx.errors[0]
        raise ComponentCrash(_culprit(exc), int((loop.time() - t0) * 1e6), exc)

    result = RunResult(s)
    _collect(s, result, ctx.links, gw, sim, agents)
    result.wall_s = time.perf_counter() - start
    return result


def run_realtime(s: Scenario, components: tuple[str, ...] = ("gateway", "sim", "agents")) -> RunResult:
    return asyncio.run(run_realtime_async(s, components))


def run(s: Scenario) -> RunResult:
    return run_virtual(s) if s.mode is Mode.VIRTUAL else run_realtime(s)


def packaged_scenario(name: str = "paper_fig11.scn") -> Path:
    return Path(str(resources.files("gridloop") / "data" / name))


__all__ = [
    "ComponentCrash",
    "ConnectTimeout",
    "RunResult",
    "packaged_scenario",
    "run",
    "run_realtime",
    "run_virtual",
]

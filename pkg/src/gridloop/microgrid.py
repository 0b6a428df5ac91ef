"""Aggregated islanded-microgrid model: droop-controlled storage, PV injection, two loads.

All ESS share one system frequency. Primary control is a linear droop per
unit; the frequency follows the droop equilibrium through a first-order lag,
integrated with explicit Euler.

Sign conventions (per unit on ``s_base``): ESS output and PV are injections,
building and load2 are consumptions. ``u`` shifts an ESS droop line up by
``u`` Hz (secondary correction).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .hub.core import Measurement
from .scheduler import PRIO_SIM
from .transport import HubClient

F_NOM = 50.0
PV_TOPIC = "prismes/pv/power"
BUILDING_TOPIC = "prismes/building/power"
FREQ_TOPIC = "predis/grid/freq"


def u_topic(i: int) -> str:
    return f"predis/ess/{i}/u"


def p_topic(i: int) -> str:
    return f"predis/ess/{i}/p"


class NoFormingSource(RuntimeError):
    """No grid-forming unit online: the frequency is undefined."""


class Overload(RuntimeError):
    """Every ESS is saturated and no damping can absorb the imbalance."""


class Target(str, enum.Enum):
    PV = "pv"
    BUILDING = "building"
    LOAD2 = "load2"


class Action(str, enum.Enum):
    CONNECT = "connect"
    DISCONNECT = "disconnect"


@dataclass(frozen=True)
class EssParams:
    id: int
    m_droop: float = 0.1  # Hz per pu
    p_set: float = 0.0
    p_min: float = -1.0
    p_max: float = 1.0
    u: float = 0.0  # Hz
    online: bool = True

    def __post_init__(self):
        if not self.m_droop > 0:
            raise ValueError(f"ESS {self.id}: droop gain must be positive")
        if not self.p_min <= 0 <= self.p_max:
            raise ValueError(f"ESS {self.id}: need p_min <= 0 <= p_max")


@dataclass(frozen=True)
class Breakers:
    pv: bool = False
    building: bool = False
    load2: bool = False


@dataclass(frozen=True)
class Disturbance:
    t_us: int
    action: Action
    target: Target

    def __post_init__(self):
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "target", Target(self.target))


@dataclass(frozen=True)
class MicrogridState:
    ess: tuple[EssParams, ...]
    t_us: int = 0
    f: float = F_NOM
    p_ess: tuple[float, ...] = ()
    p_pv: float = 0.0
    p_building: float = 0.0
    p_load2: float = 0.1
    breakers: Breakers = field(default_factory=Breakers)
    f_nom: float = F_NOM
    damping_d: float = 0.0
    tau_f: float = 0.5
    s_base: float = 10_000.0

    def __post_init__(self):
        if not self.p_ess:
            object.__setattr__(self, "p_ess", tuple(ess_power(self.f, e, self.f_nom) for e in self.ess))

    def external_power(self) -> float:
        """Net non-ESS injection with open breakers zeroed."""
        b = self.breakers
        return (
            (self.p_pv if b.pv else 0.0)
            - (self.p_building if b.building else 0.0)
            - (self.p_load2 if b.load2 else 0.0)
        )


def ess_power(f: float, params: EssParams, f_nom: float = F_NOM) -> float:
    if not params.online:
        return 0.0
    p = params.p_set + (f_nom + params.u - f) / params.m_droop
    return min(max(p, params.p_min), params.p_max)


def _balance(state: MicrogridState, f: float) -> float:
    return sum(ess_power(f, e, state.f_nom) for e in state.ess) + state.external_power() - state.damping_d * (f - state.f_nom)


def steady_state_frequency(state: MicrogridState) -> float:
    """Frequency at which the droop units, external injections and damping balance.

    Closed form when no unit saturates; otherwise the same linear solve on the
    piecewise segment containing the root.
    """
    units = [e for e in state.ess if e.online]
    if not units:
        raise NoFormingSource("all ESS are offline")
    f_nom, d, p_ext = state.f_nom, state.damping_d, state.external_power()

    def solve(free: list[EssParams], pinned: float) -> float | None:
        denom = sum(1.0 / e.m_droop for e in free) + d
        if denom == 0.0:
            return None
        num = sum(e.p_set + (f_nom + e.u) / e.m_droop for e in free) + pinned + p_ext + d * f_nom
        return num / denom

    f = solve(units, 0.0)
    if all(e.p_min <= e.p_set + (f_nom + e.u - f) / e.m_droop <= e.p_max for e in units):
        return f

    # Saturation: walk the segments between droop breakpoints.
    points = sorted(
        {f_nom + e.u - e.m_droop * (e.p_max - e.p_set) for e in units}
        | {f_nom + e.u - e.m_droop * (e.p_min - e.p_set) for e in units}
    )
    bounds = [-math.inf, *points, math.inf]
    for lo, hi in zip(bounds, bounds[1:]):
        probe = (lo + hi) / 2 if math.isfinite(lo) and math.isfinite(hi) else (hi - 1.0 if math.isfinite(hi) else lo + 1.0)
        free, pinned = [], 0.0
        for e in units:
            p = e.p_set + (f_nom + e.u - probe) / e.m_droop
            if p > e.p_max:
                pinned += e.p_max
            elif p < e.p_min:
                pinned += e.p_min
            else:
                free.append(e)
        f = solve(free, pinned)
        if f is None:
            if pinned + p_ext == 0.0:
                return min(max(f_nom, lo), hi)
            continue
        tol = 1e-12 * max(1.0, abs(f))
        if lo - tol <= f <= hi + tol:
            return f
    raise Overload(f"imbalance {p_ext:+.4f} pu exceeds ESS capacity")


def power_balance_residual(state: MicrogridState) -> float:
    return _balance(state, state.f)


def apply_disturbance(state: MicrogridState, d: Disturbance) -> MicrogridState:
    closed = d.action is Action.CONNECT
    return replace(state, breakers=replace(state.breakers, **{d.target.value: closed}))


def fold_inputs(state: MicrogridState, inputs: Mapping[str, float]) -> MicrogridState:
    """Take the latest gateway powers (W) and agent setpoints (Hz); hold anything missing."""
    changes = {}
    if PV_TOPIC in inputs:
        changes["p_pv"] = inputs[PV_TOPIC] / state.s_base
    if BUILDING_TOPIC in inputs:
        changes["p_building"] = inputs[BUILDING_TOPIC] / state.s_base
    ess = tuple(replace(e, u=float(inputs[u_topic(e.id)])) if u_topic(e.id) in inputs else e for e in state.ess)
    if ess != state.ess:
        changes["ess"] = ess
    return replace(state, **changes) if changes else state


def prepare(
    state: MicrogridState,
    inputs: Mapping[str, float] | None = None,
    disturbances: Iterable[Disturbance] = (),
    dt_us: int = 0,
) -> MicrogridState:
    """Fold inputs, apply disturbances due in (t - dt, t], refresh ESS outputs at the current f."""
    if inputs:
        state = fold_inputs(state, inputs)
    for d in disturbances:
        if state.t_us - dt_us < d.t_us <= state.t_us or d.t_us == state.t_us:
            state = apply_disturbance(state, d)
    return replace(state, p_ess=tuple(ess_power(state.f, e, state.f_nom) for e in state.ess))


def advance(state: MicrogridState, dt_us: int) -> MicrogridState:
    """One explicit-Euler step of the frequency lag, then ESS outputs at the new f."""
    if dt_us <= 0:
        raise ValueError("dt must be positive")
    f_ss = steady_state_frequency(state)
    f = state.f + (dt_us / 1e6 / state.tau_f) * (f_ss - state.f)
    return replace(
        state,
        f=f,
        t_us=state.t_us + dt_us,
        p_ess=tuple(ess_power(f, e, state.f_nom) for e in state.ess),
    )


def step(
    state: MicrogridState,
    dt_us: int,
    inputs: Mapping[str, float] | None = None,
    disturbances: Iterable[Disturbance] = (),
) -> MicrogridState:
    if dt_us <= 0:
        raise ValueError("dt must be positive")
    return advance(prepare(state, inputs, disturbances, dt_us), dt_us)


def default_state(
    n_ess: int = 4,
    m_droop: float | Sequence[float] = 0.1,
    **kwargs,
) -> MicrogridState:
    gains = [m_droop] * n_ess if isinstance(m_droop, (int, float)) else list(m_droop)
    ess = tuple(EssParams(i + 1, m_droop=float(g)) for i, g in enumerate(gains))
    return MicrogridState(ess=ess, **kwargs)


TRACE_HEADER = ["t_us", "f_hz", "p_pv_pu", "p_building_pu", "p_load2_pu"]


def trace_header(n_ess: int) -> list[str]:
    return TRACE_HEADER + [f"p_ess{i}_pu" for i in range(1, n_ess + 1)] + [f"u{i}_hz" for i in range(1, n_ess + 1)]


def trace_row(state: MicrogridState) -> tuple:
    b = state.breakers
    return (
        state.t_us,
        state.f,
        state.p_pv if b.pv else 0.0,
        state.p_building if b.building else 0.0,
        state.p_load2 if b.load2 else 0.0,
        *state.p_ess,
        *(e.u for e in state.ess),
    )


class MicrogridSim:
    """Hub-attached simulator task: steps every ``dt_us``, publishes each emission period."""

    def __init__(
        self,
        state: MicrogridState,
        dt_us: int = 10_000,
        horizon_us: int = 0,
        emission_period_us: int = 1_000_000,
        disturbances: Iterable[Disturbance] = (),
    ):
        self.state = state
        self.dt_us = dt_us
        self.horizon_us = horizon_us
        self.emission_period_us = emission_period_us
        self.disturbances = sorted(disturbances, key=lambda d: d.t_us)
        self.trace: list[tuple] = []
        self.error: Exception | None = None
        self._inbox: dict[str, float] = {}
        self._client: HubClient | None = None
        self._seq = 0

    def start(self, client: HubClient) -> None:
        self._client = client
        client.on_message = self._on_message
        client.subscribe("prismes/*/power")
        client.subscribe("predis/ess/*/u")
        if self.horizon_us > 0:
            client.port.call_at(0, self._tick, priority=PRIO_SIM)

    def _on_message(self, m: Measurement) -> None:
        if isinstance(m.value, float):
            self._inbox[m.topic] = m.value

    def _tick(self) -> None:
        t = self.state.t_us
        inputs, self._inbox = self._inbox, {}
        try:
            self.state = prepare(self.state, inputs, self.disturbances, self.dt_us)
            self.trace.append(trace_row(self.state))
            if t % self.emission_period_us == 0:
                self._publish(t)
            self.state = advance(self.state, self.dt_us)
        except (NoFormingSource, Overload) as exc:
            self.error = exc
            raise RuntimeError(f"microgrid-sim failed at t={t} us: {exc}") from exc
        nxt = self.state.t_us
        if nxt < self.horizon_us:
            self._client.port.call_at(nxt, self._tick, priority=PRIO_SIM)

    def _publish(self, t: int) -> None:
        self._seq += 1
        self._client.publish(FREQ_TOPIC, self.state.f, self._seq, t)
        for e, p in zip(self.state.ess, self.state.p_ess):
            self._client.publish(p_topic(e.id), p, self._seq, t)

"""Agent layer: neighbor-only average consensus on the frequency deviation.

One agent per ESS. Each control cycle (triggered by a frequency
measurement) the agents run synchronous Metropolis-weighted averaging rounds,
exchanging values with their neighbors only. An agent that sees its own value
settle for ``r`` consecutive rounds releases one secondary set-point and
broadcasts a final value, which its neighbors then hold for the rest of the
cycle.

Round numbers are global: cycle ``s`` (the measurement sequence number) owns
rounds ``s*(max_iter+1) ... s*(max_iter+1)+max_iter``, so a message from an
older cycle is recognisably stale.
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hub.core import Measurement
from .microgrid import F_NOM, FREQ_TOPIC, u_topic
from .scheduler import PRIO_AGENT
from .transport import HubClient


class DisconnectedGraph(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


# -- graphs and weights --------------------------------------------------------

def adjacency_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """Edges use 0-based node ids."""
    adj = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop on node {i}")
        adj[i, j] = adj[j, i] = True
    return adj


def ring_adjacency(n: int) -> np.ndarray:
    if n == 2:
        return path_adjacency(2)
    return adjacency_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_adjacency(n: int) -> np.ndarray:
    return adjacency_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete_adjacency(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def is_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 0:
        return False
    seen = {0}
    todo = deque([0])
    while todo:
        i = todo.popleft()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                todo.append(int(j))
    return len(seen) == n


def metropolis_weights(adj: np.ndarray) -> np.ndarray:
    """Doubly stochastic weights: 1/(1+max(d_i, d_j)) on edges, remainder on the diagonal."""
    adj = np.asarray(adj, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    if adj.diagonal().any():
        raise ValueError("adjacency must not contain self-loops")
    if not is_connected(adj):
        raise DisconnectedGraph("agent graph is not connected")
    deg = adj.sum(axis=1)
    n = adj.shape[0]
    W = np.zeros((n, n))
    for i, j in zip(*np.nonzero(adj)):
        W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


def second_largest_modulus(W: np.ndarray) -> float:
    mods = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1]
    return float(mods[1]) if len(mods) > 1 else 0.0


# -- matrix form ------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceCriterion:
    eps: float = 1e-6  # Hz
    r: int = 3
    max_iter: int = 500

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.r < 1 or self.max_iter < self.r:
            raise ValueError("need r >= 1 and max_iter >= r")


def consensus_round(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    """One synchronous round; each row only touches self and neighbor entries."""
    x = np.asarray(x, dtype=float)
    if W.shape != (len(x), len(x)):
        raise ValueError("dimension mismatch")
    out = np.empty_like(x)
    for i in range(len(x)):
        nz = np.flatnonzero(W[i])
        out[i] = float(np.dot(W[i, nz], x[nz]))
    return out


@dataclass(frozen=True)
class ConsensusResult:
    x: np.ndarray  # per-agent converged values
    iters: int


def run_consensus(x0: Sequence[float], W: np.ndarray, crit: ConvergenceCriterion = ConvergenceCriterion()) -> ConsensusResult:
    """Iterate until every agent has declared local convergence.

    An agent declares once its own |x(k) - x(k-1)| < eps for r consecutive
    rounds; declarations are sticky.
    """
    x = np.asarray(x0, dtype=float).copy()
    streak = np.zeros(len(x), dtype=int)
    declared = np.zeros(len(x), dtype=bool)
    for k in range(1, crit.max_iter + 1):
        nxt = consensus_round(x, W)
        small = np.abs(nxt - x) < crit.eps
        streak = np.where(small, streak + 1, 0)
        declared |= streak >= crit.r
        x = nxt
        if declared.all():
            return ConsensusResult(x, k)
    raise NoConvergence(f"no consensus after {crit.max_iter} rounds")


# -- agent protocol -----------------------------------------------------------------

@dataclass(frozen=True)
class XMessage:
    sender: int
    to: int
    round: int
    x: float
    final: bool = False


@dataclass(frozen=True)
class FreqMeasurement:
    f: float
    seq: int


@dataclass(frozen=True)
class Setpoint:
    agent: int
    u: float
    round: int


@dataclass(frozen=True)
class ConvergenceEvent:
    agent: int
    cycle: int
    rounds: int
    x_bar: float
    converged: bool


@dataclass
class AgentState:
    id: int
    neighbor_weights: dict[int, float]
    self_weight: float
    k_s: float = 1.0
    x: float = 0.0
    u: float = 0.0
    round: int = 0
    history: tuple[float, ...] = ()
    active: bool = False
    cycle: int = 0
    inbox_rounds: dict[int, dict[int, float]] = field(default_factory=dict)
    held: dict[int, tuple[int, float]] = field(default_factory=dict)
    stale: int = 0
    aborted: int = 0

    @property
    def neighbors(self) -> list[int]:
        return sorted(self.neighbor_weights)


def make_agents(W: np.ndarray, k_s: float = 1.0) -> list[AgentState]:
    n = W.shape[0]
    return [
        AgentState(
            id=i,
            neighbor_weights={int(j): float(W[i, j]) for j in np.flatnonzero(W[i]) if j != i},
            self_weight=float(W[i, i]),
            k_s=k_s,
        )
        for i in range(n)
    ]


def secondary_update(state: AgentState, x_bar: float) -> AgentState:
    state = copy.copy(state)
    state.u = state.u + state.k_s * x_bar
    return state


def _broadcast(state: AgentState, final: bool = False) -> list[XMessage]:
    return [XMessage(state.id, j, state.round, state.x, final) for j in state.neighbors]


def agent_step(
    state: AgentState,
    inbox: Iterable[XMessage | FreqMeasurement],
    crit: ConvergenceCriterion = ConvergenceCriterion(),
    f_nom: float = F_NOM,
) -> tuple[AgentState, list]:
    """Consume messages, run every round that has all neighbor values, return outgoing items.

    The outbox holds XMessages (one per neighbor per completed round),
    at most one Setpoint per cycle, and ConvergenceEvents for the log.
    """
    s = copy.copy(state)
    s.inbox_rounds = {k: dict(v) for k, v in state.inbox_rounds.items()}
    s.held = dict(state.held)
    out: list = []
    stride = crit.max_iter + 1

    for msg in inbox:
        if isinstance(msg, FreqMeasurement):
            base = msg.seq * stride
            if base < s.round or (base == s.round and s.active):
                s.stale += 1
                continue
            if s.active:
                s.aborted += 1
            s.active, s.cycle, s.round = True, msg.seq, base
            s.x = f_nom - msg.f
            s.history = ()
            s.inbox_rounds = {k: v for k, v in s.inbox_rounds.items() if k >= base}
            out += _broadcast(s)
        elif msg.sender in s.neighbor_weights:
            if msg.round < s.round and not msg.final:
                s.stale += 1
            elif msg.final:
                s.held[msg.sender] = (msg.round, msg.x)
            else:
                s.inbox_rounds.setdefault(msg.round, {})[msg.sender] = msg.x

    base = s.cycle * stride
    while s.active:
        got = s.inbox_rounds.get(s.round, {})
        values = {}
        for j in s.neighbor_weights:
            if j in got:
                values[j] = got[j]
            elif j in s.held and base <= s.held[j][0] <= s.round:
                values[j] = s.held[j][1]
            else:
                break
        else:
            nxt = s.self_weight * s.x + sum(w * values[j] for j, w in sorted(s.neighbor_weights.items()))
            s.history = (s.history + (abs(nxt - s.x),))[-crit.r:]
            s.inbox_rounds.pop(s.round, None)
            s.round += 1
            s.x = nxt
            done = len(s.history) == crit.r and all(h < crit.eps for h in s.history)
            if done or s.round - base >= crit.max_iter:
                if done:
                    before = s.u
                    s = secondary_update(s, s.x)
                    if s.u != before:
                        out.append(Setpoint(s.id, s.u, s.round))
                out.append(ConvergenceEvent(s.id, s.cycle, s.round - base, s.x, done))
                out += _broadcast(s, final=True)
                s.active = False
            else:
                out += _broadcast(s)
            continue
        break
    return s, out


def run_message_passing(
    x0: Sequence[float],
    W: np.ndarray,
    crit: ConvergenceCriterion = ConvergenceCriterion(),
    k_s: float = 1.0,
    f_nom: float = F_NOM,
) -> tuple[np.ndarray, list[AgentState], list]:
    """Run one consensus cycle with zero-delay direct channels between agents.

    ``x0`` are initial deviations; each agent is fed the measurement
    ``f_nom - x0[i]``. Returns final values, agent states and all emitted items.
    """
    agents = make_agents(W, k_s)
    queues: list[list] = [[FreqMeasurement(f_nom - float(v), 1)] for v in x0]
    emitted: list = []
    while any(queues):
        batch, queues = queues, [[] for _ in agents]
        for i, inbox in enumerate(batch):
            if not inbox:
                continue
            agents[i], out = agent_step(agents[i], inbox, crit, f_nom)
            for item in out:
                emitted.append(item)
                if isinstance(item, XMessage):
                    queues[item.to].append(item)
    return np.array([a.x for a in agents]), agents, emitted


# -- hub-attached agent ---------------------------------------------------------------

def x_topic(i: int) -> str:
    return f"agents/{i}/x"


def done_topic(i: int) -> str:
    return f"agents/{i}/done"


def encode_x(round_: int, x: float) -> str:
    return f"{round_}:{x!r}"


def decode_x(payload: str) -> tuple[int, float]:
    r, _, x = payload.partition(":")
    return int(r), float(x)


class AgentNode:
    """One agent as a hub client. Agent ids on the wire are 1-based (agent i drives ESS i)."""

    def __init__(self, state: AgentState, crit: ConvergenceCriterion, f_nom: float = F_NOM):
        self.state = state
        self.crit = crit
        self.f_nom = f_nom
        self.events: list[tuple[int, ConvergenceEvent]] = []
        self.setpoints: list[tuple[int, Setpoint]] = []
        self.wire_id = state.id + 1
        self._client: HubClient | None = None
        self._seq: dict[str, int] = {}

    def start(self, client: HubClient) -> None:
        self._client = client
        client.on_message = self._on_message
        client.subscribe(FREQ_TOPIC)
        for j in self.state.neighbors:
            client.subscribe(x_topic(j + 1))
            client.subscribe(done_topic(j + 1))

    def _on_message(self, m: Measurement) -> None:
        parts = m.topic.split("/")
        if m.topic == FREQ_TOPIC and isinstance(m.value, float):
            msg = FreqMeasurement(m.value, m.seq)
        elif len(parts) == 3 and parts[0] == "agents" and isinstance(m.value, str):
            r, x = decode_x(m.value)
            sender = int(parts[1]) - 1
            msg = XMessage(sender, self.state.id, r, x, final=parts[2] == "done")
        else:
            return
        self._client.port.call_at(self._client.now(), self._step, msg, priority=PRIO_AGENT)

    def _step(self, msg) -> None:
        self.state, out = agent_step(self.state, [msg], self.crit, self.f_nom)
        now = self._client.now()
        sent_rounds = set()
        for item in out:
            if isinstance(item, XMessage):
                key = (item.round, item.final)
                if key not in sent_rounds:  # one PUB reaches every neighbor
                    sent_rounds.add(key)
                    topic = done_topic(self.wire_id) if item.final else x_topic(self.wire_id)
                    self._publish(topic, encode_x(item.round, item.x), now)
            elif isinstance(item, Setpoint):
                self.setpoints.append((now, item))
                self._publish(u_topic(self.wire_id), item.u, now)
            elif isinstance(item, ConvergenceEvent):
                self.events.append((now, item))

    def _publish(self, topic: str, value, now: int) -> None:
        seq = self._seq.get(topic, 0) + 1
        self._seq[topic] = seq
        self._client.publish(topic, value, seq, now)

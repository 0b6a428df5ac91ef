from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridloop.mas import (
    ConvergenceCriterion,
    ConvergenceEvent,
    DisconnectedGraph,
    FreqMeasurement,
    NoConvergence,
    Setpoint,
    XMessage,
    adjacency_from_edges,
    agent_step,
    complete_adjacency,
    consensus_round,
    decode_x,
    encode_x,
    make_agents,
    metropolis_weights,
    path_adjacency,
    ring_adjacency,
    run_consensus,
    run_message_passing,
    second_largest_modulus,
    secondary_update,
)
from gridloop.microgrid import Breakers, default_state, steady_state_frequency

GRAPHS = {"ring": ring_adjacency, "path": path_adjacency, "complete": complete_adjacency}
RING4 = metropolis_weights(ring_adjacency(4))


def metropolis_oracle(adj):
    """Straight transcription of the Metropolis-Hastings rule."""
    n = len(adj)
    deg = adj.sum(axis=1)
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and adj[i, j]:
                W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
    return W


def brute_iterations(x0, W, eps, r, max_iter=10_000):
    x = np.array(x0, dtype=float)
    streak = [0] * len(x)
    done = [False] * len(x)
    for k in range(1, max_iter + 1):
        nxt = W @ x
        for i in range(len(x)):
            streak[i] = streak[i] + 1 if abs(nxt[i] - x[i]) < eps else 0
            done[i] = done[i] or streak[i] >= r
        x = nxt
        if all(done):
            return k
    return None


def test_metropolis_examples():
    assert np.allclose(RING4, np.where(ring_adjacency(4) | np.eye(4, dtype=bool), 1 / 3, 0))
    assert np.allclose(metropolis_weights(path_adjacency(2)), [[0.5, 0.5], [0.5, 0.5]])
    two_pairs = adjacency_from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(DisconnectedGraph):
        metropolis_weights(two_pairs)


@pytest.mark.parametrize("name", GRAPHS)
@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_metropolis_matches_oracle(name, n):
    adj = GRAPHS[name](n)
    W = metropolis_weights(adj)
    assert np.allclose(W, metropolis_oracle(adj), atol=1e-15)
    assert np.allclose(W.sum(axis=0), 1) and np.allclose(W.sum(axis=1), 1)
    assert np.array_equal(W, W.T) and (W >= 0).all()


def test_round_example():
    assert np.allclose(consensus_round([1, 2, 3, 4], RING4), [7 / 3, 2, 3, 8 / 3])
    assert np.array_equal(consensus_round([0.5] * 4, RING4), [0.5] * 4)


def test_run_consensus_examples():
    res = run_consensus([1, 2, 3, 4], RING4, ConvergenceCriterion(eps=1e-9, r=3))
    assert np.allclose(res.x, 2.5, atol=1e-8)
    assert res.iters == brute_iterations([1, 2, 3, 4], RING4, 1e-9, 3)
    flat = run_consensus([0.004] * 4, RING4, ConvergenceCriterion(r=3))
    assert flat.iters <= 3 and np.allclose(flat.x, 0.004)
    with pytest.raises(NoConvergence):
        run_consensus([0, 1, 0, 1], metropolis_weights(path_adjacency(4)), ConvergenceCriterion(eps=1e-12, r=3, max_iter=5))


@given(
    st.sampled_from(list(GRAPHS)),
    st.integers(2, 6),
    st.integers(0, 2**32 - 1),
    st.sampled_from([1e-6, 1e-9]),
    st.integers(1, 4),
)
def test_iteration_count_matches_brute_force(name, n, seed, eps, r):
    W = metropolis_weights(GRAPHS[name](n))
    x0 = np.random.default_rng(seed).uniform(-0.05, 0.05, n)
    assert run_consensus(x0, W, ConvergenceCriterion(eps, r, 10_000)).iters == brute_iterations(x0, W, eps, r)


@given(st.sampled_from(list(GRAPHS)), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_conservation_and_contraction(name, n, seed):
    W = metropolis_weights(GRAPHS[name](n))
    lam = second_largest_modulus(W)
    x0 = np.random.default_rng(seed).uniform(-1, 1, n)
    mean = x0.mean()
    e0 = np.linalg.norm(x0 - mean)
    x = x0
    for k in range(1, 40):
        x = consensus_round(x, W)
        assert abs(x.sum() - x0.sum()) < 1e-12
        # Euclidean norm: W is symmetric, so the spectral bound is exact there
        assert np.linalg.norm(x - mean) <= lam**k * e0 + 1e-12


def test_contraction_in_max_norm_needs_sqrt_n():
    W = metropolis_weights(ring_adjacency(5))
    lam = second_largest_modulus(W)
    x0 = np.array([-1.0, -1.0, 0.0, 0.0, -1.0])
    x1 = consensus_round(x0, W)
    # one round can shrink the max deviation less than lam does ...
    assert np.abs(x1 - x0.mean()).max() > lam * np.abs(x0 - x0.mean()).max()
    # ... but never by more than the sqrt(n) norm-equivalence factor
    assert np.abs(x1 - x0.mean()).max() <= np.sqrt(5) * lam * np.abs(x0 - x0.mean()).max()


def test_secondary_update_examples():
    a = make_agents(RING4)[0]
    assert secondary_update(replace(a, u=0.001), 0.004).u == pytest.approx(0.005)
    assert secondary_update(replace(a, u=0.001), 0.0).u == 0.001
    assert secondary_update(replace(a, k_s=0.5), 0.01).u == pytest.approx(0.005)


def test_message_codec():
    assert decode_x(encode_x(1503, -0.0265)) == (1503, -0.0265)


# -- agent_step --------------------------------------------------------------------

def test_step_waits_for_missing_neighbor():
    a = make_agents(RING4)[0]
    a, out = agent_step(a, [FreqMeasurement(49.97, 1)])
    assert sorted(m.to for m in out) == [1, 3]
    before = a.x
    a, out = agent_step(a, [XMessage(1, 0, a.round, 0.03)])
    assert out == [] and a.x == before
    a, out = agent_step(a, [XMessage(3, 0, a.round, 0.03)])
    assert a.x == pytest.approx(0.03)
    assert sorted(m.to for m in out if isinstance(m, XMessage)) == [1, 3]


def test_no_deviation_no_setpoint():
    _, _, emitted = run_message_passing([0.0] * 4, RING4)
    assert not any(isinstance(m, Setpoint) for m in emitted)
    assert all(ev.converged for ev in emitted if isinstance(ev, ConvergenceEvent))


def test_stale_measurement_ignored():
    a = make_agents(RING4)[0]
    a, _ = agent_step(a, [FreqMeasurement(49.9, 5)])
    a, out = agent_step(a, [FreqMeasurement(49.8, 4)])
    assert out == [] and a.stale == 1 and a.cycle == 5


def test_setpoint_gating():
    x0 = [0.02, -0.01, 0.03, 0.0]
    _, agents, emitted = run_message_passing(x0, RING4)
    for i in range(4):
        mine = [m for m in emitted if getattr(m, "agent", getattr(m, "sender", None)) == i and not isinstance(m, XMessage)]
        kinds = [type(m).__name__ for m in mine]
        assert kinds == ["Setpoint", "ConvergenceEvent"]
        assert mine[0].u == pytest.approx(np.mean(x0), abs=1e-6)
        assert agents[i].u == mine[0].u


@pytest.mark.parametrize("name", GRAPHS)
@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_message_passing_equals_matrix_power(name, n):
    W = metropolis_weights(GRAPHS[name](n))
    for seed in range(10):
        x0 = np.random.default_rng(seed).uniform(-1, 1, n)
        x, _, _ = run_message_passing(x0, W, ConvergenceCriterion(eps=5e-324, r=3, max_iter=20))
        assert np.abs(x - np.linalg.matrix_power(W, 20) @ x0).max() < 1e-12


# -- closed loop against the droop model ---------------------------------------------

@given(st.floats(-0.8, 0.8), st.sampled_from(list(GRAPHS)))
def test_closed_loop_restores_frequency(p_ext, name):
    state = default_state(p_pv=max(p_ext, 0), p_load2=max(-p_ext, 0), breakers=Breakers(pv=True, load2=True))
    W = metropolis_weights(GRAPHS[name](4))
    u = np.zeros(4)
    for cycle in range(10):
        state = replace(state, ess=tuple(replace(e, u=float(u[i])) for i, e in enumerate(state.ess)))
        f = steady_state_frequency(state)
        if abs(f - 50.0) < 1e-3:
            break
        x_bar = run_consensus([50.0 - f] * 4, W).x
        u = u + 1.0 * x_bar
    assert abs(steady_state_frequency(state) - 50.0) < 1e-3

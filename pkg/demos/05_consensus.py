"""
Average consensus among the agents
==================================

Each agent only talks to its ring neighbours, yet all of them agree on the
mean frequency deviation and correct their unit by the same amount.
"""
import numpy as np

from gridloop.mas import (
    ConvergenceCriterion,
    Setpoint,
    metropolis_weights,
    ring_adjacency,
    run_consensus,
    run_message_passing,
    second_largest_modulus,
)

W = metropolis_weights(ring_adjacency(4))
print(W)
print("second largest eigenvalue modulus:", second_largest_modulus(W))

x0 = np.array([0.02, -0.01, 0.03, 0.0])  # Hz, what each agent measured
res = run_consensus(x0, W, ConvergenceCriterion(eps=1e-9, r=3))
print(f"matrix form: {res.x} after {res.iters} rounds (mean {x0.mean()})")

# same thing as real message passing, one message per neighbour per round
x, agents, emitted = run_message_passing(x0, W)
print("message passing:", x)
print("setpoints:", [(m.agent, round(m.u, 6)) for m in emitted if isinstance(m, Setpoint)])
print("messages sent:", sum(1 for m in emitted if type(m).__name__ == "XMessage"))

# Four storage units share a load step through droop, then a uniform setpoint
# shift puts the frequency back on 50 Hz.
from dataclasses import replace

from gridloop.microgrid import Breakers, default_state, steady_state_frequency, step

state = default_state(p_load2=0.2, breakers=Breakers(load2=True))
f_ss = steady_state_frequency(state)
print(f"equilibrium after a 0.2 pu step: {f_ss:.4f} Hz")

for k in range(301):
    if k % 50 == 0:
        print(f"t={state.t_us / 1e6:4.2f}s  f={state.f:.5f} Hz  p_ess={[round(p, 4) for p in state.p_ess]}")
    state = step(state, 10_000)

# secondary correction: every unit moves its setpoint by the same deviation
shift = 50.0 - f_ss
state = replace(state, ess=tuple(replace(e, u=shift) for e in state.ess))
print(f"with u = {shift:.4f} Hz on every unit: {steady_state_frequency(state):.6f} Hz")

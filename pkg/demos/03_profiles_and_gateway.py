"""Profile playback through the SCADA gateway.

The shipped day curves run 09:00-16:00 at one sample per minute. Experiments
use the 11:00-12:20 slice, re-based so that t=0 is 11:00.
"""
from gridloop.gateway import Gateway, run_emitter
from gridloop.netem import DelayModel
from gridloop.profiles import US_PER_HOUR, US_PER_MIN, crop_window, sample_hold, synthetic_building, synthetic_pv

pv = crop_window(synthetic_pv(), 2 * US_PER_HOUR, 2 * US_PER_HOUR + 80 * US_PER_MIN)
building = crop_window(synthetic_building(), 2 * US_PER_HOUR, 2 * US_PER_HOUR + 80 * US_PER_MIN)
print(len(pv), "samples; pv at 11:00 =", pv.power_w[0], "W, at 12:19 =", pv.power_w[-1], "W")
print("hold between samples:", sample_hold(pv, 30_000_000), "W at t=30 s")

# ten seconds of telemetry as a subscriber on the hub sees it, building breaker opened at 5 s
stream = run_emitter(
    {"pv": pv, "building": building},
    period_us=1_000_000,
    horizon_us=10_000_000,
    link=DelayModel(),
    disturbances=[(5_000_000, "disconnect", "building")],
    seed=1,
)
for m in stream:
    print(f"{m.topic:24s} seq={m.seq:2d} t={m.source_ts / 1e6:4.1f}s {m.value:8.1f} W")

# the address space
gw = Gateway({"pv": pv, "building": building})
gw.emit(0)
for path, node in gw.nodes.items():
    print(path, node.kind.value, node.value.value if node.value else "-")

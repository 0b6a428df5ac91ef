"""Run the components as separate processes on the wall clock.

Starts a hub, then the gateway in its own process, while the simulator and
the agents run here. Takes about 20 seconds.
"""
import dataclasses
import subprocess
import sys
import tempfile
from pathlib import Path

from gridloop import format_scenario, load_scenario, packaged_scenario, run_realtime

PORT = 7411
scenario = load_scenario(packaged_scenario())
scenario = dataclasses.replace(
    scenario,
    horizon_us=20_000_000,
    hub=f"127.0.0.1:{PORT}",
    disturbances=tuple(d for d in scenario.disturbances if d.t_us == 0),
)

tmp = Path(tempfile.mkdtemp())
scn = tmp / "short.scn"
scn.write_text(format_scenario(scenario))

hub = subprocess.Popen([sys.executable, "-m", "gridloop.cli", "hub", "--listen", f"127.0.0.1:{PORT}"], stdout=subprocess.PIPE, text=True)
print(hub.stdout.readline().strip())
gateway = subprocess.Popen([sys.executable, "-m", "gridloop.cli", "gateway", "--scenario", str(scn), "--hub", scenario.hub, "--out", str(tmp)])
try:
    result = run_realtime(scenario, ("sim", "agents"))
    gateway.wait(30)
finally:
    hub.terminate()

for t, f in list(zip(result.times_s, result.freq))[::200]:
    print(f"t={t:5.1f}s  f={f:.4f} Hz")
print("consensus cycles:", len({ev.cycle for _, ev in result.consensus}))
print("gateway latency log:", tmp / "gateway" / "latency_wan.csv")

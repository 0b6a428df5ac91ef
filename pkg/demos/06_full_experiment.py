# The full experiment in virtual time: PV and building connect at t=0, a second
# load joins at 60 s, and the building is disconnected at the gateway at 120 s.
# Results (CSV traces, SVG charts, summary) land in out/paper_fig11.
import sys

from gridloop import check_acceptance, emit_report, load_scenario, packaged_scenario, run_virtual

scenario = load_scenario(packaged_scenario())
result = run_virtual(scenario)
out = sys.argv[1] if len(sys.argv) > 1 else scenario.out_dir
emit_report(result, out)

print(f"{len(result.trace)} samples in {result.wall_s:.2f} s wall")
for t, f in list(zip(result.times_s, result.freq))[::1000]:
    print(f"t={t:6.1f}s  f={f:.4f} Hz")
for v in check_acceptance(result):
    print(v.line())
print("written to", out)

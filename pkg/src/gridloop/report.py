"""Result files (CSV traces, latency logs, summary, SVG charts) and run-level acceptance checks."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

from .mas import ConvergenceEvent
from .netem import LatencyStats, latency_csv, read_latency_csv
from .runner import RunResult
from .scenario import format_scenario, load_scenario

BAND_HZ = 0.02
MIN_DEVIATION_HZ = 0.01
SETTLE_LIMIT_S = 30.0
LATENCY_MEAN_MS = (30.0, 35.0)
LATENCY_PEAK_MS = 85.0
SPIKE_FLOOR_MS = 70.0

SCENARIO_FILE = "scenario.scn"


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    measured: str
    informational: bool = False

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        if self.informational:
            tag += " (info)"
        return f"[{tag}] {self.name}: {self.measured}"


@dataclass(frozen=True)
class EventSettling:
    t_s: float
    window_end_s: float
    max_dev_hz: float
    settle_s: float | None  # None: still outside the band at window end

    @property
    def ok(self) -> bool:
        return self.settle_s is not None and self.settle_s <= SETTLE_LIMIT_S and self.max_dev_hz >= MIN_DEVIATION_HZ


def event_times(result: RunResult) -> list[float]:
    return sorted({d.t_us / 1e6 for d in result.scenario.disturbances if d.t_us < result.scenario.horizon_us})


def settling(result: RunResult, band: float = BAND_HZ) -> list[EventSettling]:
    """Per disturbance time: peak deviation and time to re-enter the band for good.

    Each event's window runs until the next event (or the horizon).
    """
    f_nom = result.scenario.microgrid.f_nom_hz
    times = event_times(result)
    horizon = result.scenario.horizon_us / 1e6
    ts, fs = result.times_s, result.freq
    out = []
    for k, t_ev in enumerate(times):
        end = times[k + 1] if k + 1 < len(times) else horizon
        window = [(t, abs(f - f_nom)) for t, f in zip(ts, fs) if t_ev <= t < end]
        if not window:
            out.append(EventSettling(t_ev, end, 0.0, None))
            continue
        max_dev = max(d for _, d in window)
        last_out = None
        for t, d in window:
            if d > band:
                last_out = t
        if last_out is None:
            settle = 0.0
        elif last_out == window[-1][0]:
            settle = None
        else:
            nxt = next(t for t, _ in window if t > last_out)
            settle = nxt - t_ev
        out.append(EventSettling(t_ev, end, max_dev, settle))
    return out


def wan_link(result: RunResult) -> str:
    return result.scenario.link_for("gateway")


def check_acceptance(result: RunResult) -> list[Verdict]:
    verdicts = []

    events = settling(result)
    if not events:
        verdicts.append(Verdict("frequency restoration", True, "no disturbances in scenario", informational=True))
    else:
        detail = "; ".join(
            f"t={e.t_s:g}s dev={e.max_dev_hz:.4f}Hz settle={'never' if e.settle_s is None else f'{e.settle_s:.2f}s'}"
            for e in events
        )
        verdicts.append(Verdict("frequency restoration", all(e.ok for e in events), detail))

    name = wan_link(result)
    stats = result.latency_stats.get(name) or LatencyStats()
    if stats.count == 0:
        verdicts.append(Verdict(f"latency mean ({name})", True, "no traffic", informational=True))
    else:
        lo, hi = LATENCY_MEAN_MS
        verdicts.append(
            Verdict(f"latency mean ({name})", lo <= stats.mean_ms <= hi, f"{stats.mean_ms:.2f} ms over {stats.count} msgs")
        )
        verdicts.append(Verdict(f"latency peak ({name})", stats.max_ms <= LATENCY_PEAK_MS, f"max {stats.max_ms:.2f} ms"))
        if stats.max_ms < SPIKE_FLOOR_MS:
            verdicts.append(Verdict(f"latency spikes ({name})", True, "no spikes", informational=True))
        else:
            n_spikes = sum(1 for s, d in result.latency.get(name, []) if (d - s) / 1000 >= SPIKE_FLOOR_MS)
            verdicts.append(Verdict(f"latency spikes ({name})", True, f"{n_spikes} samples >= {SPIKE_FLOOR_MS:g} ms"))

    reorders = {n: st.reorder_count for n, st in sorted(result.latency_stats.items())}
    verdicts.append(
        Verdict("ordering", all(v == 0 for v in reorders.values()), ", ".join(f"{n}: {v} reordered" for n, v in reorders.items()) or "no links")
    )

    failed = [ev for _, ev in result.consensus if not ev.converged]
    verdicts.append(
        Verdict(
            "consensus convergence",
            not failed,
            f"{len(result.consensus) - len(failed)}/{len(result.consensus)} agent-cycles converged",
        )
    )
    return verdicts


# -- files ------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def trace_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.trace_header)
    for row in result.trace:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def consensus_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_us", "agent", "cycle", "rounds", "x_bar_hz", "converged"])
    for t, ev in result.consensus:
        w.writerow([t, ev.agent + 1, ev.cycle, ev.rounds, repr(ev.x_bar), int(ev.converged)])
    return buf.getvalue()


def summary_text(result: RunResult, verdicts: list[Verdict] | None = None) -> str:
    s = result.scenario
    verdicts = verdicts if verdicts is not None else check_acceptance(result)
    lines = [f"scenario: {s.name}", f"mode: {s.mode.value}", f"seed: {s.seed}", f"horizon_s: {s.horizon_us / 1e6:g}"]
    lines.append(f"samples: {len(result.trace)}")
    if result.trace:
        f = result.freq
        f_nom = s.microgrid.f_nom_hz
        lines.append(f"max_deviation_hz: {max(abs(x - f_nom) for x in f):.6f}")
        lines.append(f"final_frequency_hz: {f[-1]:.6f}")
    events = settling(result)
    lines.append(f"disturbance_events: {len(events)}")
    for e in events:
        settle = "never" if e.settle_s is None else f"{e.settle_s:.2f}"
        lines.append(f"  t={e.t_s:g}s max_dev_hz={e.max_dev_hz:.6f} settling_s={settle}")
    for name, st in sorted(result.latency_stats.items()):
        lines.append(
            f"latency[{name}]: count={st.count} mean_ms={st.mean_ms:.3f} max_ms={st.max_ms:.3f} reordered={st.reorder_count}"
        )
    rounds = [ev.rounds for _, ev in result.consensus]
    if rounds:
        lines.append(
            f"consensus: cycles={len({ev.cycle for _, ev in result.consensus})} agent_events={len(rounds)} "
            f"mean_rounds={sum(rounds) / len(rounds):.2f} max_rounds={max(rounds)}"
        )
    else:
        lines.append("consensus: no events")
    lines.append("acceptance:")
    lines += ["  " + v.line() for v in verdicts]
    return "\n".join(lines) + "\n"


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def svg_chart(series: list[tuple[str, list[float], list[float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Polyline chart on a fixed 800x400 viewBox; one vertex per data point."""
    W, H, L, R, T, B = 800, 400, 70, 20, 30, 50
    xs = [x for _, sx, _ in series for x in sx]
    ys = [y for _, _, sy in series for y in sy]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return H - B - (y - y0) / (y1 - y0) * (H - T - B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
    ]
    for x in _ticks(x0, x1):
        out.append(f'<line x1="{px(x):.2f}" y1="{H - B}" x2="{px(x):.2f}" y2="{H - B + 5}" stroke="black"/>')
        out.append(f'<text x="{px(x):.2f}" y="{H - B + 18}" text-anchor="middle" font-size="10">{x:.6g}</text>')
    for y in _ticks(y0, y1):
        out.append(f'<line x1="{L - 5}" y1="{py(y):.2f}" x2="{L}" y2="{py(y):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py(y) + 3:.2f}" text-anchor="end" font-size="10">{y:.6g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="15" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {H / 2})">{ylabel}</text>')
    for k, (label, sx, sy) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(sx, sy))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"><title>{label}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(result: RunResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    verdicts = check_acceptance(result)
    files = {
        "trace.csv": trace_csv(result),
        "consensus.csv": consensus_csv(result),
        SCENARIO_FILE: format_scenario(result.scenario),
        "summary.txt": summary_text(result, verdicts),
        "freq.svg": svg_chart([("f", result.times_s, result.freq)], "System frequency", "t (s)", "f (Hz)"),
        "latency.svg": svg_chart(
            [
                (name, [s / 1e6 for s, _ in recs], [(d - s) / 1000 for s, d in recs])
                for name, recs in sorted(result.latency.items())
            ],
            "One-way message latency",
            "send time (s)",
            "delay (ms)",
        ),
    }
    for name, _ in result.scenario.links:
        files[f"latency_{name}.csv"] = latency_csv(result.latency.get(name, []))
    written = []
    for fname, text in files.items():
        path = out / fname
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


def load_result(out_dir: str | Path) -> RunResult:
    """Rebuild a RunResult from files written by :func:`emit_report`."""
    out = Path(out_dir)
    scenario = load_scenario(out / SCENARIO_FILE)
    result = RunResult(scenario)
    rows = list(csv.reader(io.StringIO((out / "trace.csv").read_text(encoding="utf-8"))))
    result.trace_header = rows[0]
    result.trace = [tuple([int(r[0])] + [float(v) for v in r[1:]]) for r in rows[1:] if r]
    reorders = {}
    spath = out / "summary.txt"
    if spath.exists():
        for m in re.finditer(r"^latency\[([^\]]+)\]:.*reordered=(\d+)", spath.read_text(encoding="utf-8"), re.M):
            reorders[m.group(1)] = int(m.group(2))
    for name, _ in scenario.links:
        path = out / f"latency_{name}.csv"
        if path.exists():
            recs = read_latency_csv(path.read_text(encoding="utf-8"))
            result.latency[name] = recs
            stats = LatencyStats.from_records(recs)
            # the merged file interleaves pipes, so per-pipe reorder counts come from the summary
            stats.reorder_count = reorders.get(name, 0)
            result.latency_stats[name] = stats
    cpath = out / "consensus.csv"
    if cpath.exists():
        crow = list(csv.reader(io.StringIO(cpath.read_text(encoding="utf-8"))))[1:]
        result.consensus = [
            (int(r[0]), ConvergenceEvent(int(r[1]) - 1, int(r[2]), int(r[3]), float(r[4]), r[5] == "1")) for r in crow if r
        ]
    return result

import dataclasses
import re
from pathlib import Path

import pytest

from gridloop import cli
from gridloop.report import (
    check_acceptance,
    emit_report,
    load_result,
    settling,
    summary_text,
)
from gridloop.runner import ComponentCrash, RunResult, run_virtual
from gridloop.scenario import Scenario, parse_scenario


def short(s, seconds):
    return dataclasses.replace(
        s,
        horizon_us=seconds * 1_000_000,
        disturbances=tuple(d for d in s.disturbances if d.t_us < seconds * 1_000_000),
    )


def test_reference_run_restores_frequency(reference_run):
    events = settling(reference_run)
    assert [e.t_s for e in events] == [0.0, 60.0, 120.0]
    for e in events:
        assert e.max_dev_hz >= 0.01
        assert e.settle_s is not None and e.settle_s <= 30.0
    assert all(v.passed for v in check_acceptance(reference_run))
    assert abs(reference_run.freq[-1] - 50.0) < 1e-3


def test_reference_run_shape(reference_run):
    assert len(reference_run.trace) == 18_000
    assert reference_run.trace_header[:2] == ["t_us", "f_hz"]
    assert reference_run.emissions == {"building": 180, "pv": 180}
    # one event per agent per measurement cycle that reached the agents
    cycles = {ev.cycle for _, ev in reference_run.consensus}
    assert len(reference_run.consensus) == 4 * len(cycles) and len(cycles) >= 175


def test_summary_lists_three_events(reference_run):
    text = summary_text(reference_run)
    assert text.count("settling_s=") == 3
    assert "disturbance_events: 3" in text


def test_determinism_bytes(reference_scenario, tmp_path):
    s = short(reference_scenario, 70)
    a, b = tmp_path / "a", tmp_path / "b"
    emit_report(run_virtual(s), a)
    emit_report(run_virtual(s), b)
    for name in ("trace.csv", "latency_wan.csv", "latency_lan.csv", "consensus.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_changes_latency(reference_scenario):
    s = short(reference_scenario, 20)
    one = run_virtual(s).latency["wan"]
    two = run_virtual(dataclasses.replace(s, seed=43)).latency["wan"]
    assert one != two


def test_horizon_zero():
    r = run_virtual(Scenario(horizon_us=0))
    assert r.trace == [] and r.consensus == [] and r.emissions == {}


def test_controller_disabled_fails_restoration(reference_scenario):
    s = dataclasses.replace(reference_scenario, agents=dataclasses.replace(reference_scenario.agents, k_s=0.0))
    verdicts = {v.name: v for v in check_acceptance(run_virtual(s))}
    assert not verdicts["frequency restoration"].passed


def test_no_spikes_is_informational(reference_scenario):
    links = dict(reference_scenario.links)
    links["wan"] = dataclasses.replace(links["wan"], spike_prob=0.0)
    s = dataclasses.replace(short(reference_scenario, 30), links=tuple(sorted(links.items())))
    v = {v.name: v for v in check_acceptance(run_virtual(s))}["latency spikes (wan)"]
    assert v.passed and v.informational and v.measured == "no spikes"


def test_overload_is_reported_as_component_crash():
    s = parse_scenario("[run]\nhorizon_s = 5\n[microgrid]\nload2_pu = 9\n[disturbances]\nl = 1 connect load2\n")
    with pytest.raises(ComponentCrash) as err:
        run_virtual(s)
    assert err.value.component == "microgrid-sim"
    assert err.value.t_us == 1_000_000


def test_empty_result_files(tmp_path):
    emit_report(RunResult(Scenario(horizon_us=0)), tmp_path)
    assert (tmp_path / "trace.csv").read_text() == "\n"
    assert (tmp_path / "latency_wan.csv").read_text() == "send_ts_us,delivery_ts_us,delay_ms\n"
    assert "samples: 0" in (tmp_path / "summary.txt").read_text()
    assert "<svg" in (tmp_path / "freq.svg").read_text()


def test_report_files_and_reload(reference_scenario, tmp_path):
    r = run_virtual(short(reference_scenario, 65))
    emit_report(r, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"trace.csv", "latency_wan.csv", "latency_lan.csv", "summary.txt", "freq.svg", "latency.svg"} <= names
    svg = (tmp_path / "freq.svg").read_text()
    assert 'viewBox="0 0 800 400"' in svg
    points = re.search(r'points="([^"]*)"', svg).group(1).split()
    assert len(points) == len(r.trace)
    back = load_result(tmp_path)
    assert back.trace == r.trace
    assert [v.line() for v in check_acceptance(back)] == [v.line() for v in check_acceptance(r)]


def test_cli_run_and_check(reference_scenario, tmp_path, capsys):
    scn = tmp_path / "short.scn"
    from gridloop.scenario import format_scenario

    scn.write_text(format_scenario(short(reference_scenario, 65)))
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", str(scn), "--out", str(out)]) == 0
    assert (out / "trace.csv").exists()
    assert cli.main(["check", "--result", str(out)]) == 0
    text = capsys.readouterr().out
    assert "[PASS] frequency restoration" in text


def test_cli_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[run]\nseed = x\n")
    assert cli.main(["run", "--scenario", str(bad)]) == 2
    assert "run.seed" in capsys.readouterr().err


def test_cli_failing_verdict_exit_code(reference_scenario, tmp_path):
    s = dataclasses.replace(short(reference_scenario, 30), agents=dataclasses.replace(reference_scenario.agents, k_s=0.0))
    from gridloop.scenario import format_scenario

    scn = tmp_path / "off.scn"
    scn.write_text(format_scenario(s))
    assert cli.main(["run", "--scenario", str(scn), "--out", str(tmp_path / "o")]) == 1


def test_bytes_independent_of_hash_seed(reference_scenario, tmp_path):
    import os
    import subprocess
    import sys

    from gridloop.scenario import format_scenario

    scn = tmp_path / "s.scn"
    scn.write_text(format_scenario(short(reference_scenario, 15)))
    for h in ("1", "4242"):
        env = dict(os.environ, PYTHONHASHSEED=h)
        subprocess.run(
            [sys.executable, "-m", "gridloop.cli", "run", "--scenario", str(scn), "--out", str(tmp_path / h)],
            env=env, check=True, capture_output=True,
        )
    for name in ("trace.csv", "latency_wan.csv", "latency_lan.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4242" / name).read_bytes()

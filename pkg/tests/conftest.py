import sys

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_scenario():
    from gridloop.runner import packaged_scenario
    from gridloop.scenario import load_scenario

    return load_scenario(packaged_scenario())


@pytest.fixture(scope="session")
def reference_run(reference_scenario):
    from gridloop.runner import run_virtual

    return run_virtual(reference_scenario)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        name, passed, measured = mod.RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n}. {name}: {measured}")

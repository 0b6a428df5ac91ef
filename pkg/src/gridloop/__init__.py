"""Co-simulation of an islanded microgrid with networked secondary frequency control."""
from .netem import DelayModel, LinkMode, LatencyStats
from .report import check_acceptance, emit_report, load_result
from .runner import ComponentCrash, RunResult, packaged_scenario, run, run_realtime, run_virtual
from .scenario import Scenario, format_scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "ComponentCrash",
    "DelayModel",
    "LatencyStats",
    "LinkMode",
    "RunResult",
    "Scenario",
    "check_acceptance",
    "emit_report",
    "format_scenario",
    "load_result",
    "load_scenario",
    "packaged_scenario",
    "parse_scenario",
    "run",
    "run_realtime",
    "run_virtual",
]

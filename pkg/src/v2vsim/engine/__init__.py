"""Scenario-level simulation engine: configs, the slot loop, metrics, CLI."""

from .config import (EventSpec, FlowConfig, PROTOCOLS, ScenarioConfig,
                     SegmentSpec, VehicleSpec, make_preset, preset_names)
from .metrics import (LinkTotals, RunMetrics, read_summary, read_window_rows,
                      write_metrics)
from .simulator import Simulation, run_scenario

__all__ = [
    "EventSpec", "FlowConfig", "PROTOCOLS", "ScenarioConfig", "SegmentSpec",
    "VehicleSpec", "make_preset", "preset_names",
    "LinkTotals", "RunMetrics", "read_summary", "read_window_rows",
    "write_metrics",
    "Simulation", "run_scenario",
]

"""Slotted vehicle-to-vehicle network simulator.

The package couples a car-following mobility layer, a stochastic wireless
channel, and a reliability-controlled broadcast MAC: every sender-receiver
link maintains an exclusion region around the receiver (a disk whose radius
is a controlled multiple of the sender-receiver distance), a feedback
controller adapts that multiple from measured packet delivery ratios, and a
decentralized prioritized independent-set scheduler turns the resulting
conflict graph into per-slot transmit decisions.  Baseline MAC models
(carrier-sense and reservation TDMA) and an oracle power-threshold variant
share the same mobility, channel, and metrics pipeline.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .broadcast import ControlMessage, OverheadReport, SenderRegion
from .channel import ChannelParams, PowerEstimate, RadioModel
from .engine import RunMetrics, ScenarioConfig, Simulation, make_preset, \
    preset_names, run_scenario
from .exclusion import ExclusionRegion, InterferenceBudget, LinkModel
from .link_init import LinkRegistry
from .mobility import IdmParams, RoadNetwork, TrafficSim, VehicleState
from .scheduler import ConflictGraph, SenderFootprint, SlotSchedule
from .tracking import TrackerBank, UkfParams

__all__ = [
    "ChannelParams",
    "ConflictGraph",
    "ControlMessage",
    "ExclusionRegion",
    "IdmParams",
    "InterferenceBudget",
    "LinkModel",
    "LinkRegistry",
    "OverheadReport",
    "PowerEstimate",
    "RadioModel",
    "RoadNetwork",
    "RunMetrics",
    "ScenarioConfig",
    "SenderFootprint",
    "SenderRegion",
    "Simulation",
    "SlotSchedule",
    "TrackerBank",
    "TrafficSim",
    "UkfParams",
    "VehicleState",
    "make_preset",
    "preset_names",
    "run_scenario",
    "__version__",
]

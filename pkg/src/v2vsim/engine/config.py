"""Scenario configuration: JSON-serializable run descriptions and presets.

A :class:`ScenarioConfig` fully determines a run (road layout, vehicles,
channel, protocol and timing); two runs from the same config and seed
produce identical outputs.  Presets cover the stock scenarios used by the
command line and the test suite.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

PROTOCOLS = ("cps", "ocps", "csma", "rtdma")

FADING_KINDS = ("none", "rayleigh", "nakagami")


@dataclass(frozen=True)
class SegmentSpec:
    """One directed road segment (polyline plus lane count)."""

    segment_id: int
    points: tuple[tuple[float, float], ...]
    lanes: int = 1
    speed_limit_mps: float = 33.33


@dataclass(frozen=True)
class VehicleSpec:
    """One explicitly placed vehicle, spawned at time zero."""

    segment_id: int
    lane: int
    s_pos: float
    speed_mps: float
    desired_speed_mps: float | None = None
    time_gap_s: float = 1.0
    frozen: bool = False


@dataclass(frozen=True)
class FlowConfig:
    """Poisson arrival flow feeding a segment entry."""

    segment_id: int
    lane: int
    rate_veh_per_s: float
    speed_mps: float
    speed_jitter: float = 0.1


@dataclass(frozen=True)
class EventSpec:
    """Scripted intervention; `vehicle` indexes the `vehicles` list."""

    time_s: float
    action: str
    vehicle: int
    value: float = 0.0


_EVENT_ACTIONS = ("set_speed",)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulation run."""

    name: str = "scenario"
    duration_s: float = 60.0
    warmup_s: float = 10.0
    slot_s: float = 0.0025
    seed: int = 1
    protocol: str = "cps"

    segments: tuple[SegmentSpec, ...] = ()
    connections: tuple[tuple[int, int], ...] = ()
    vehicles: tuple[VehicleSpec, ...] = ()
    flows: tuple[FlowConfig, ...] = ()
    events: tuple[EventSpec, ...] = ()

    comm_range_m: float = 150.0
    target_reliability: float = 0.90
    ewma_weight: float = 0.2
    tx_power_dbm: float | None = None
    packet_bytes: int = 1500
    bitrate_bps: float = 6.0e6
    data_period_slots: int = 40
    control_period_slots: int = 100
    feedback_window_slots: int = 1000
    discovery_s: float = 2.0
    discovery_period_slots: int = 10
    gps_sigma_m: float = 4.0

    path_loss_exponent: float = 3.0
    ref_loss_db: float = 47.0
    shadow_sigma_db: float = 2.0
    fading: str = "none"
    nakagami_m: float = 3.0
    noise_floor_dbm: float = -98.0
    coherence_slots: int = 4000

    csma_cw_slots: int = 16
    csma_sense_dbm: float = -85.0
    rtdma_frame_slots: int = 40

    protect_covered: bool = True
    record_controller: bool = False

    # -- derived helpers -----------------------------------------------

    @property
    def n_slots(self) -> int:
        return int(round(self.duration_s / self.slot_s))

    @property
    def warmup_slots(self) -> int:
        return int(round(self.warmup_s / self.slot_s))

    @property
    def discovery_slots(self) -> int:
        return int(round(self.discovery_s / self.slot_s))

    @property
    def airtime_s(self) -> float:
        return self.packet_bytes * 8.0 / self.bitrate_bps

    # -- validation ----------------------------------------------------

    def validate(self) -> None:
        """Raise ValueError naming the first offending field."""
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, "
                             f"got {self.protocol!r}")
        if self.fading not in FADING_KINDS:
            raise ValueError(f"fading must be one of {FADING_KINDS}, "
                             f"got {self.fading!r}")
        _positive = [
            ("duration_s", self.duration_s), ("slot_s", self.slot_s),
            ("comm_range_m", self.comm_range_m),
            ("packet_bytes", self.packet_bytes),
            ("bitrate_bps", self.bitrate_bps),
            ("data_period_slots", self.data_period_slots),
            ("control_period_slots", self.control_period_slots),
            ("feedback_window_slots", self.feedback_window_slots),
            ("discovery_period_slots", self.discovery_period_slots),
            ("csma_cw_slots", self.csma_cw_slots),
            ("rtdma_frame_slots", self.rtdma_frame_slots),
            ("path_loss_exponent", self.path_loss_exponent),
            ("coherence_slots", self.coherence_slots),
        ]
        for fname, val in _positive:
            if val <= 0:
                raise ValueError(f"{fname} must be positive, got {val}")
        _nonneg = [
            ("warmup_s", self.warmup_s), ("discovery_s", self.discovery_s),
            ("gps_sigma_m", self.gps_sigma_m),
            ("shadow_sigma_db", self.shadow_sigma_db),
        ]
        for fname, val in _nonneg:
            if val < 0:
                raise ValueError(f"{fname} must be non-negative, got {val}")
        if not 0.0 < self.target_reliability < 1.0:
            raise ValueError("target_reliability must lie in (0, 1), got "
                             f"{self.target_reliability}")
        if not 0.0 <= self.ewma_weight < 1.0:
            raise ValueError("ewma_weight must lie in [0, 1), got "
                             f"{self.ewma_weight}")
        if self.warmup_s > self.duration_s:
            raise ValueError("warmup_s cannot exceed duration_s")
        if self.airtime_s > self.slot_s:
            raise ValueError(
                f"packet airtime {self.airtime_s * 1e3:.3f} ms does not fit "
                f"the {self.slot_s * 1e3:.3f} ms slot")
        if not self.segments:
            raise ValueError("at least one road segment is required")
        seg_ids = set()
        for i, seg in enumerate(self.segments):
            if seg.segment_id in seg_ids:
                raise ValueError(f"segments[{i}]: duplicate id {seg.segment_id}")
            seg_ids.add(seg.segment_id)
            if len(seg.points) < 2:
                raise ValueError(f"segments[{i}] needs at least two points")
            if not 1 <= seg.lanes <= 16:
                raise ValueError(f"segments[{i}].lanes must lie in 1..16")
        for i, (src, dst) in enumerate(self.connections):
            if src not in seg_ids or dst not in seg_ids:
                raise ValueError(f"connections[{i}] references unknown segment")
        for i, veh in enumerate(self.vehicles):
            if veh.segment_id not in seg_ids:
                raise ValueError(f"vehicles[{i}] references unknown segment "
                                 f"{veh.segment_id}")
            if veh.speed_mps < 0:
                raise ValueError(f"vehicles[{i}].speed_mps must be >= 0")
        for i, flow in enumerate(self.flows):
            if flow.segment_id not in seg_ids:
                raise ValueError(f"flows[{i}] references unknown segment")
            if flow.rate_veh_per_s <= 0:
                raise ValueError(f"flows[{i}].rate_veh_per_s must be positive")
        for i, ev in enumerate(self.events):
            if ev.action not in _EVENT_ACTIONS:
                raise ValueError(f"events[{i}].action must be one of "
                                 f"{_EVENT_ACTIONS}, got {ev.action!r}")
            if not 0 <= ev.vehicle < len(self.vehicles):
                raise ValueError(f"events[{i}].vehicle index out of range")
            if ev.time_s < 0 or ev.time_s > self.duration_s:
                raise ValueError(f"events[{i}].time_s outside the run")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(data)
        kw["segments"] = tuple(
            SegmentSpec(segment_id=s["segment_id"],
                        points=tuple((float(x), float(y))
                                     for x, y in s["points"]),
                        lanes=s.get("lanes", 1),
                        speed_limit_mps=s.get("speed_limit_mps", 33.33))
            for s in data.get("segments", ()))
        kw["connections"] = tuple((int(a), int(b))
                                  for a, b in data.get("connections", ()))
        kw["vehicles"] = tuple(VehicleSpec(**v)
                               for v in data.get("vehicles", ()))
        kw["flows"] = tuple(FlowConfig(**f) for f in data.get("flows", ()))
        kw["events"] = tuple(EventSpec(**e) for e in data.get("events", ()))
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            cfg = cls.from_json(fh.read())
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# presets


def _two_road_crossing() -> ScenarioConfig:
    """Two perpendicular roads crossing at the origin (grade-separated):
    a slow 40 km/h arterial and a fast 120 km/h throughway, two lanes
    each, 84 vehicles total."""
    slow, fast = 40.0 / 3.6, 120.0 / 3.6
    segments = (
        SegmentSpec(1, ((-1100.0, 0.0), (1100.0, 0.0)), lanes=2,
                    speed_limit_mps=slow * 1.3),
        SegmentSpec(2, ((0.0, -1100.0), (0.0, 1100.0)), lanes=2,
                    speed_limit_mps=fast * 1.2),
    )
    # deterministic +-10% spread of desired speeds, baked into the config
    rng = np.random.default_rng(2024)
    vehicles = []
    for lane in (0, 1):
        for i in range(22):  # arterial: 59 m spacing, staying on-road all run
            s = 200.0 + 59.0 * i + (8.0 if lane else 0.0)
            v0 = slow * float(rng.uniform(0.9, 1.1))
            vehicles.append(VehicleSpec(1, lane, round(s, 2), round(slow, 2),
                                        desired_speed_mps=round(v0, 2),
                                        time_gap_s=1.4))
    for lane in (0, 1):
        for i in range(20):  # throughway: 40 m spacing, crosses mid-run
            s = 60.0 + 40.0 * i + (11.0 if lane else 0.0)
            v0 = fast * float(rng.uniform(0.9, 1.1))
            vehicles.append(VehicleSpec(2, lane, round(s, 2), round(fast, 2),
                                        desired_speed_mps=round(v0, 2),
                                        time_gap_s=1.2))
    return ScenarioConfig(name="two_road_crossing", duration_s=40.0,
                          warmup_s=10.0, segments=segments,
                          vehicles=tuple(vehicles))


def _static_line() -> ScenarioConfig:
    """20 parked vehicles in a 12 m spaced line; deterministic channel and
    unsmoothed feedback, for closed-loop controller checks."""
    segments = (SegmentSpec(1, ((0.0, 0.0), (400.0, 0.0)), lanes=1),)
    vehicles = tuple(VehicleSpec(1, 0, 60.0 + 12.0 * i, 0.0, frozen=True)
                     for i in range(20))
    return ScenarioConfig(name="static_line", duration_s=125.0, warmup_s=0.0,
                          segments=segments, vehicles=vehicles,
                          ewma_weight=0.0, shadow_sigma_db=0.0,
                          gps_sigma_m=1.0, record_controller=True)


def _receiver_departure() -> ScenarioConfig:
    """Two receivers sit beside an out-of-range interferer cluster and each
    one's exclusion region covers it; one receiver drives away mid-run.
    Stresses the covered-region protection rule of the broadcast adapter."""
    segments = (
        SegmentSpec(1, ((-500.0, 0.0), (500.0, 0.0)), lanes=1),
        SegmentSpec(2, ((-500.0, 3.5), (500.0, 3.5)), lanes=1,
                    speed_limit_mps=40.0),
    )
    vehicles = (
        VehicleSpec(1, 0, 500.0, 0.0, frozen=True),    # 0: sender, x=0
        VehicleSpec(1, 0, 640.0, 0.0, frozen=True),    # 1: receiver, x=140
        VehicleSpec(1, 0, 662.0, 0.0, frozen=True),    # 2: interferer, x=162
        VehicleSpec(1, 0, 670.0, 0.0, frozen=True),    # 3: interferer, x=170
        VehicleSpec(1, 0, 678.0, 0.0, frozen=True),    # 4: interferer, x=178
        VehicleSpec(2, 0, 645.0, 0.0, frozen=True),    # 5: receiver, x=145
    )
    events = (EventSpec(time_s=22.0, action="set_speed", vehicle=5,
                        value=35.0),)
    return ScenarioConfig(name="receiver_departure", duration_s=30.0,
                          warmup_s=10.0, segments=segments, vehicles=vehicles,
                          events=events, data_period_slots=10,
                          gps_sigma_m=1.0)


def _static_ring() -> ScenarioConfig:
    """12 parked vehicles evenly spaced on a ring road."""
    n, spacing = 12, 25.0
    radius = n * spacing / (2.0 * math.pi)
    pts = tuple((round(radius * math.cos(2.0 * math.pi * i / 48), 3),
                 round(radius * math.sin(2.0 * math.pi * i / 48), 3))
                for i in range(49))
    segments = (SegmentSpec(1, pts, lanes=1),)
    length = 2.0 * math.pi * radius
    vehicles = tuple(VehicleSpec(1, 0, round(length * i / n, 2), 0.0,
                                 frozen=True) for i in range(n))
    return ScenarioConfig(name="static_ring", duration_s=20.0, warmup_s=5.0,
                          segments=segments, connections=((1, 1),),
                          vehicles=vehicles, shadow_sigma_db=0.0)


_PRESETS = {
    "two_road_crossing": _two_road_crossing,
    "static_line": _static_line,
    "receiver_departure": _receiver_departure,
    "static_ring": _static_ring,
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def make_preset(name: str, **overrides) -> ScenarioConfig:
    """Build a stock scenario; keyword overrides replace config fields."""
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; "
                         f"available: {', '.join(preset_names())}")
    cfg = _PRESETS[name]()
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg

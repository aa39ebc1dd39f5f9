"""Road network, car-following dynamics, and traffic simulation.

Vehicles follow the improved intelligent-driver model (IIDM) blended with a
constant-acceleration heuristic (the ACC variant): the heuristic keeps the
follower calm when the raw model overreacts to cut-ins or short gaps.  Roads
are directed polyline segments with parallel lanes; vehicles advance with a
semi-implicit Euler step, change segments at junctions, and can be spawned
by Poisson arrival flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

LANE_WIDTH_M = 3.5
DEFAULT_VEHICLE_LENGTH_M = 4.5
#: Heading change (radians) above which a segment transition counts as a turn.
TURN_ANGLE_RAD = math.radians(30.0)
#: Stand-in gap for vehicles with no lead; large enough that the interaction
#: term of the model vanishes to double precision.
NO_LEAD_GAP_M = 1.0e4


class CollisionError(RuntimeError):
    """Raised when a bumper-to-bumper gap becomes non-positive."""

    def __init__(self, vehicle_ids: tuple[int, int], time_s: float):
        self.vehicle_ids = vehicle_ids
        self.time_s = time_s
        super().__init__(
            f"vehicle {vehicle_ids[0]} collided with lead {vehicle_ids[1]} "
            f"at t={time_s:.3f}s"
        )


@dataclass(frozen=True)
class IdmParams:
    """Driver model parameters.

    Args:
        v0: Desired (free-flow) speed in m/s.  Must be positive.
        time_gap: Desired time gap to the lead vehicle in seconds.
        min_gap: Standstill minimum bumper-to-bumper gap in meters.
        delta: Free-acceleration exponent.
        accel_max: Maximum acceleration in m/s^2.
        decel_comf: Comfortable deceleration in m/s^2 (positive number).
        blend: Mixing coefficient of the constant-acceleration heuristic,
            in [0, 1].  0 disables the heuristic, values near 1 trust it.
    """

    v0: float
    time_gap: float = 1.0
    min_gap: float = 2.0
    delta: float = 4.0
    accel_max: float = 1.0
    decel_comf: float = 1.5
    blend: float = 0.99

    def __post_init__(self):
        if self.v0 <= 0 or self.time_gap <= 0 or self.min_gap <= 0:
            raise ValueError("v0, time_gap and min_gap must be positive")
        if self.accel_max <= 0 or self.decel_comf <= 0:
            raise ValueError("accel_max and decel_comf must be positive")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")


def _as_arrays(*xs):
    arrs = [np.asarray(x, dtype=float) for x in xs]
    scalar = all(a.ndim == 0 for a in arrs)
    return arrs, scalar


def _ret(x: np.ndarray, scalar: bool):
    return float(x) if scalar else x


def _params_arrays(p):
    """Accept a single IdmParams or a dict of per-vehicle parameter arrays."""
    if isinstance(p, IdmParams):
        return (p.v0, p.time_gap, p.min_gap, p.delta, p.accel_max,
                p.decel_comf, p.blend)
    return (p["v0"], p["time_gap"], p["min_gap"], p["delta"],
            p["accel_max"], p["decel_comf"], p["blend"])


def idm_desired_gap(v, v_lead, p):
    """Desired dynamic gap: min_gap + max(0, v*T + v*(v-v_lead)/(2*sqrt(a*b)))."""
    (va, vla), scalar = _as_arrays(v, v_lead)
    v0, tg, s0, _, a, b, _ = _params_arrays(p)
    dyn = va * tg + va * (va - vla) / (2.0 * np.sqrt(a * b))
    return _ret(s0 + np.maximum(0.0, dyn), scalar)


def idm_accel_free(v, p):
    """Free-road acceleration; smooth pull toward v0, braking above it.

    The braking branch uses (v0/v) so that it vanishes at v = v0 and grows
    with excess speed, which keeps v0 a stable equilibrium.
    """
    (va,), scalar = _as_arrays(v)
    v0, _, _, delta, a, b, _ = _params_arrays(p)
    with np.errstate(over="ignore", divide="ignore"):
        below = a * (1.0 - (va / v0) ** delta)
        inv = np.where(va > 0, v0 / np.where(va > 0, va, 1.0), np.inf)
        above = -b * (1.0 - inv ** (a * delta / b))
    return _ret(np.where(va <= v0, below, above), scalar)


def idm_accel_iidm(gap, v, v_lead, p):
    """Improved-IDM acceleration; free of the plain model's gap overshoot.

    Branches on v <= v0 and on z = desired_gap/gap >= 1 (the constrained
    regime).  Adjacent branches agree on their common boundary.  Raises
    ValueError on a non-positive gap: that state is a collision.
    """
    (ga, va, vla), scalar = _as_arrays(gap, v, v_lead)
    if np.any(ga <= 0):
        raise ValueError("bumper-to-bumper gap must be positive")
    v0, tg, s0, delta, a, b, blend = _params_arrays(p)
    z = np.asarray(idm_desired_gap(va, vla, p)) / ga
    af = np.asarray(idm_accel_free(va, p))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        constrained = a * (1.0 - z * z)
        # z < 1 with v <= v0: af >= 0 and the exponent 2a/af -> inf as v -> v0;
        # z**inf -> 0 for z < 1, so the limit value is af itself.
        expo = np.where(af > 0, 2.0 * a / np.where(af > 0, af, 1.0), np.inf)
        unconstrained = np.where(af > 0, af * (1.0 - z**expo), 0.0)
    res = np.where(
        va <= v0,
        np.where(z >= 1.0, constrained, unconstrained),
        np.where(z >= 1.0, af + constrained, af),
    )
    return _ret(res, scalar)


def idm_accel_cah(gap, v, v_lead, a_lead, p):
    """Constant-acceleration heuristic.

    Assumes both vehicles hold their accelerations (lead capped at accel_max)
    and no safety gap is needed; yields the acceleration that just avoids a
    collision under those assumptions.
    """
    (ga, va, vla, ala), scalar = _as_arrays(gap, v, v_lead, a_lead)
    if np.any(ga <= 0):
        raise ValueError("bumper-to-bumper gap must be positive")
    _, _, _, _, a, _, _ = _params_arrays(p)
    eff = np.minimum(ala, a)
    denom = vla * vla - 2.0 * ga * eff
    with np.errstate(divide="ignore", invalid="ignore"):
        stopping = np.where(
            denom != 0.0, va * va * eff / np.where(denom != 0.0, denom, 1.0),
            -va * va / (2.0 * ga)
        )
    closing = np.where(va >= vla, (va - vla) ** 2 / (2.0 * ga), 0.0)
    use_stopping = vla * (va - vla) <= -2.0 * ga * eff
    return _ret(np.where(use_stopping, stopping, eff - closing), scalar)


def idm_accel_acc(gap, v, v_lead, a_lead, p):
    """ACC acceleration: IIDM when it is the calmer choice, else a blend
    of IIDM with the constant-acceleration heuristic."""
    (ga, va, vla, ala), scalar = _as_arrays(gap, v, v_lead, a_lead)
    _, _, _, _, _, b, blend = _params_arrays(p)
    ai = np.asarray(idm_accel_iidm(ga, va, vla, p))
    ac = np.asarray(idm_accel_cah(ga, va, vla, ala, p))
    mixed = (1.0 - blend) * ai + blend * (ac + b * np.tanh((ai - ac) / b))
    return _ret(np.where(ai >= ac, ai, mixed), scalar)


@dataclass(frozen=True)
class RoadSegment:
    """A directed polyline with parallel lanes.

    Lane 0 runs on the polyline itself; higher lanes are offset to the right
    of the travel direction in LANE_WIDTH_M steps.
    """

    segment_id: int
    points: np.ndarray  # (k, 2) float
    lanes: int = 1
    speed_limit: float = 33.33

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("points must be a (k>=2, 2) array")
        if self.lanes < 1:
            raise ValueError("a segment needs at least one lane")
        object.__setattr__(self, "points", pts)
        seg_vec = np.diff(pts, axis=0)
        piece_len = np.linalg.norm(seg_vec, axis=1)
        if np.any(piece_len <= 0):
            raise ValueError("degenerate polyline piece")
        object.__setattr__(self, "_piece_len", piece_len)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(piece_len)]))
        object.__setattr__(self, "_unit", seg_vec / piece_len[:, None])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def _piece_of(self, s: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum, s, side="right") - 1
        return np.clip(idx, 0, len(self._piece_len) - 1)

    def xy_of(self, s, lane=0):
        """Map arc length (and lane) to plane coordinates."""
        sa = np.atleast_1d(np.asarray(s, dtype=float))
        la = np.broadcast_to(np.atleast_1d(np.asarray(lane, dtype=float)), sa.shape)
        idx = self._piece_of(sa)
        u = self._unit[idx]
        right = np.stack([u[:, 1], -u[:, 0]], axis=1)
        xy = (self.points[idx] + u * (sa - self._cum[idx])[:, None]
              + right * (la * LANE_WIDTH_M)[:, None])
        return xy[0] if np.ndim(s) == 0 else xy

    def heading_of(self, s) -> np.ndarray:
        sa = np.atleast_1d(np.asarray(s, dtype=float))
        u = self._unit[self._piece_of(sa)]
        return u[0] if np.ndim(s) == 0 else u

    def project(self, xy) -> float:
        """Arc length of the polyline point nearest to xy (lane ignored)."""
        q = np.asarray(xy, dtype=float)
        best_s, best_d2 = 0.0, math.inf
        for i, u in enumerate(self._unit):
            rel = q - self.points[i]
            t = float(np.clip(rel @ u, 0.0, self._piece_len[i]))
            d2 = float(np.sum((rel - t * u) ** 2))
            if d2 < best_d2:
                best_d2, best_s = d2, float(self._cum[i] + t)
        return best_s


class RoadNetwork:
    """Directed road graph: segments plus junction connectivity."""

    def __init__(self, segments: list[RoadSegment],
                 connections: dict[int, list[int]] | None = None):
        self.segments = {s.segment_id: s for s in segments}
        if len(self.segments) != len(segments):
            raise ValueError("duplicate segment id")
        self.connections = {k: list(v) for k, v in (connections or {}).items()}
        for src, dsts in self.connections.items():
            if src not in self.segments:
                raise ValueError(f"unknown source segment {src}")
            for d in dsts:
                if d not in self.segments:
                    raise ValueError(f"unknown destination segment {d}")

    def next_segment(self, segment_id: int, route: list[int] | None = None) -> int | None:
        if route:
            return route[0]
        dsts = self.connections.get(segment_id)
        return dsts[0] if dsts else None

    def turn_angle(self, from_seg: int, to_seg: int) -> float:
        a = self.segments[from_seg].heading_of(self.segments[from_seg].length - 1e-9)
        b = self.segments[to_seg].heading_of(0.0)
        dot = float(np.clip(a @ b, -1.0, 1.0))
        return math.acos(dot)


@dataclass
class VehicleState:
    """Snapshot of a single vehicle (a read-only view of simulator arrays)."""

    vehicle_id: int
    segment_id: int
    lane: int
    s_pos: float
    speed: float
    accel: float
    idm: IdmParams
    lead_id: int | None = None
    length: float = DEFAULT_VEHICLE_LENGTH_M
    frozen: bool = False


@dataclass(frozen=True)
class MobilityEvent:
    """Discrete mobility event (lane change, turn, spawn, despawn)."""

    time_s: float
    kind: str
    vehicle_id: int
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FlowSpec:
    """Poisson arrival flow feeding one segment entry.

    Vehicle desired speeds are drawn uniformly in
    [speed_mps*(1-speed_jitter), speed_mps*(1+speed_jitter)].
    """

    segment_id: int
    lane: int
    rate_veh_per_s: float
    speed_mps: float
    speed_jitter: float = 0.1
    idm: IdmParams | None = None
    route: tuple[int, ...] = ()


_IDM_FIELDS = ("v0", "time_gap", "min_gap", "delta", "accel_max",
               "decel_comf", "blend")


class TrafficSim:
    """Vectorized multi-lane traffic simulator.

    State lives in parallel numpy arrays; `step` advances every vehicle one
    time step, handles segment transitions and arrivals, and returns the
    mobility events produced.  All randomness comes from the seed given at
    construction, so runs are reproducible.
    """

    def __init__(self, network: RoadNetwork, seed: int = 0):
        self.network = network
        self.time_s = 0.0
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D0B]))
        self._next_id = 0
        self._seg_order = sorted(network.segments)
        self._seg_index = {sid: i for i, sid in enumerate(self._seg_order)}
        n0 = 0
        self.ids = np.zeros(n0, dtype=np.int64)
        self.seg = np.zeros(n0, dtype=np.int64)
        self.lane = np.zeros(n0, dtype=np.int64)
        self.s = np.zeros(n0)
        self.v = np.zeros(n0)
        self.a = np.zeros(n0)
        self.length = np.zeros(n0)
        self.frozen = np.zeros(n0, dtype=bool)
        self.lead = np.full(n0, -1, dtype=np.int64)
        self.idm = {f: np.zeros(n0) for f in _IDM_FIELDS}
        self.routes: dict[int, list[int]] = {}
        self._flows: list[tuple[FlowSpec, float, int]] = []
        self._pending_lane_changes: list[tuple[float, int, int]] = []
        self.lane_change_rate_per_s = 0.0

    # -- population ----------------------------------------------------

    @property
    def n_vehicles(self) -> int:
        return len(self.ids)

    def add_vehicle(self, segment_id: int, lane: int, s_pos: float, speed: float,
                    idm: IdmParams, *, length: float = DEFAULT_VEHICLE_LENGTH_M,
                    frozen: bool = False, route: list[int] | None = None) -> int:
        if segment_id not in self.network.segments:
            raise ValueError(f"unknown segment {segment_id}")
        seg = self.network.segments[segment_id]
        if not 0 <= lane < seg.lanes:
            raise ValueError(f"lane {lane} outside segment {segment_id}")
        if not 0 <= s_pos <= seg.length:
            raise ValueError("s_pos outside segment")
        vid = self._next_id
        self._next_id += 1
        self.ids = np.append(self.ids, vid)
        self.seg = np.append(self.seg, self._seg_index[segment_id])
        self.lane = np.append(self.lane, lane)
        self.s = np.append(self.s, s_pos)
        self.v = np.append(self.v, speed)
        self.a = np.append(self.a, 0.0)
        self.length = np.append(self.length, length)
        self.frozen = np.append(self.frozen, frozen)
        self.lead = np.append(self.lead, -1)
        for f in _IDM_FIELDS:
            self.idm[f] = np.append(self.idm[f], getattr(idm, f))
        if route:
            self.routes[vid] = list(route)
        return vid

    def add_flow(self, spec: FlowSpec) -> None:
        first = self.time_s + float(self._rng.exponential(1.0 / spec.rate_veh_per_s))
        self._flows.append([spec, first, 0])

    def schedule_lane_change(self, time_s: float, vehicle_id: int, new_lane: int) -> None:
        self._pending_lane_changes.append((time_s, vehicle_id, new_lane))
        self._pending_lane_changes.sort()

    def _remove_rows(self, rows: np.ndarray) -> None:
        keep = np.ones(len(self.ids), dtype=bool)
        keep[rows] = False
        for vid in self.ids[~keep]:
            self.routes.pop(int(vid), None)
        self.ids = self.ids[keep]
        self.seg = self.seg[keep]
        self.lane = self.lane[keep]
        self.s = self.s[keep]
        self.v = self.v[keep]
        self.a = self.a[keep]
        self.length = self.length[keep]
        self.frozen = self.frozen[keep]
        self.lead = self.lead[keep]
        for f in _IDM_FIELDS:
            self.idm[f] = self.idm[f][keep]

    # -- views ---------------------------------------------------------

    def row_of(self, vehicle_id: int) -> int:
        rows = np.nonzero(self.ids == vehicle_id)[0]
        if not len(rows):
            raise KeyError(f"unknown vehicle {vehicle_id}")
        return int(rows[0])

    def vehicle(self, vehicle_id: int) -> VehicleState:
        i = self.row_of(vehicle_id)
        idm = IdmParams(**{f: float(self.idm[f][i]) for f in _IDM_FIELDS})
        lead = int(self.lead[i])
        return VehicleState(
            vehicle_id=int(self.ids[i]),
            segment_id=self._seg_order[self.seg[i]],
            lane=int(self.lane[i]),
            s_pos=float(self.s[i]),
            speed=float(self.v[i]),
            accel=float(self.a[i]),
            idm=idm,
            lead_id=None if lead < 0 else lead,
            length=float(self.length[i]),
            frozen=bool(self.frozen[i]),
        )

    def positions_xy(self) -> np.ndarray:
        """(n, 2) plane coordinates of every vehicle, in id-row order."""
        out = np.zeros((len(self.ids), 2))
        for si in np.unique(self.seg):
            mask = self.seg == si
            seg = self.network.segments[self._seg_order[si]]
            out[mask] = seg.xy_of(self.s[mask], self.lane[mask])
        return out

    def headings(self) -> np.ndarray:
        out = np.zeros((len(self.ids), 2))
        for si in np.unique(self.seg):
            mask = self.seg == si
            seg = self.network.segments[self._seg_order[si]]
            out[mask] = seg.heading_of(self.s[mask])
        return out

    # -- dynamics ------------------------------------------------------

    def _lead_arrays(self):
        """Per-vehicle lead info: (gap, lead_v, lead_a, lead_row)."""
        n = len(self.ids)
        gap = np.full(n, np.inf)
        lv = self.v.copy()
        la_ = np.zeros(n)
        lead_row = np.full(n, -1, dtype=np.int64)
        if n == 0:
            return gap, lv, la_, lead_row
        order = np.lexsort((self.s, self.lane, self.seg))
        seg_o = self.seg[order]
        lane_o = self.lane[order]
        same = (seg_o[:-1] == seg_o[1:]) & (lane_o[:-1] == lane_o[1:])
        fol = order[:-1][same]
        led = order[1:][same]
        gap[fol] = self.s[led] - self.s[fol] - self.length[led]
        lv[fol] = self.v[led]
        la_[fol] = self.a[led]
        lead_row[fol] = led
        # Front vehicle of each (segment, lane) group may have a lead on the
        # next segment along its route; rings connect a segment to itself.
        starts = np.concatenate([[True], ~same])
        group_first = order[starts]
        group_last = order[np.concatenate([~same, [True]])]
        rear_of = {}
        for r in group_first:
            rear_of[(int(self.seg[r]), int(self.lane[r]))] = int(r)
        for r in group_last:
            r = int(r)
            sid = self._seg_order[self.seg[r]]
            nxt = self.network.next_segment(sid, self.routes.get(int(self.ids[r])))
            if nxt is None:
                continue
            nseg = self.network.segments[nxt]
            nlane = min(int(self.lane[r]), nseg.lanes - 1)
            tr = rear_of.get((self._seg_index[nxt], nlane))
            if tr is None:
                continue
            seg_len = self.network.segments[sid].length
            g = seg_len - self.s[r] + self.s[tr] - self.length[tr]
            if g < gap[r]:
                gap[r] = g
                lv[r] = self.v[tr]
                la_[r] = self.a[tr]
                lead_row[r] = tr
        return gap, lv, la_, lead_row

    def step(self, dt: float) -> list[MobilityEvent]:
        """Advance all vehicles by dt seconds; returns emitted events."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        events: list[MobilityEvent] = []
        n = len(self.ids)
        if n:
            gap, lv, la_, lead_row = self._lead_arrays()
            has_lead = np.isfinite(gap)
            if np.any(gap[has_lead] <= 0):
                bad = int(np.nonzero(has_lead & (gap <= 0))[0][0])
                raise CollisionError(
                    (int(self.ids[bad]), int(self.ids[lead_row[bad]])), self.time_s)
            geff = np.where(has_lead, gap, NO_LEAD_GAP_M)
            acc = idm_accel_acc(geff, self.v, np.where(has_lead, lv, self.v),
                                np.where(has_lead, la_, 0.0), self.idm)
            acc = np.where(self.frozen, 0.0, acc)
            v_new = np.maximum(self.v + acc * dt, 0.0)
            self.s = self.s + v_new * dt
            self.a = acc
            self.v = v_new
            self.lead = np.where(lead_row >= 0, self.ids[lead_row], -1)
        self.time_s += dt

        # Scheduled and random lane changes.
        while self._pending_lane_changes and self._pending_lane_changes[0][0] <= self.time_s:
            _, vid, new_lane = self._pending_lane_changes.pop(0)
            try:
                i = self.row_of(vid)
            except KeyError:
                continue
            seg = self.network.segments[self._seg_order[self.seg[i]]]
            tgt = int(np.clip(new_lane, 0, seg.lanes - 1))
            if tgt != self.lane[i]:
                self.lane[i] = tgt
                events.append(MobilityEvent(self.time_s, "lane_change", int(vid),
                                            {"lane": tgt}))
        if self.lane_change_rate_per_s > 0 and len(self.ids):
            hits = np.nonzero(self._rng.random(len(self.ids))
                              < self.lane_change_rate_per_s * dt)[0]
            for i in hits:
                seg = self.network.segments[self._seg_order[self.seg[i]]]
                if seg.lanes < 2:
                    continue
                delta = 1 if self.lane[i] == 0 else (
                    -1 if self.lane[i] == seg.lanes - 1
                    else int(self._rng.integers(0, 2)) * 2 - 1)
                self.lane[i] += delta
                events.append(MobilityEvent(self.time_s, "lane_change",
                                            int(self.ids[i]), {"lane": int(self.lane[i])}))

        # Segment transitions and route exhaustion.
        if len(self.ids):
            over = np.nonzero(self.s > np.array(
                [self.network.segments[self._seg_order[si]].length for si in self.seg]))[0]
            gone = []
            for i in over:
                vid = int(self.ids[i])
                sid = self._seg_order[self.seg[i]]
                route = self.routes.get(vid)
                nxt = self.network.next_segment(sid, route)
                if nxt is None:
                    gone.append(i)
                    events.append(MobilityEvent(self.time_s, "despawn", vid))
                    continue
                if route:
                    route.pop(0)
                angle = self.network.turn_angle(sid, nxt)
                self.s[i] -= self.network.segments[sid].length
                nseg = self.network.segments[nxt]
                self.seg[i] = self._seg_index[nxt]
                self.lane[i] = min(int(self.lane[i]), nseg.lanes - 1)
                self.s[i] = min(self.s[i], nseg.length)
                if angle > TURN_ANGLE_RAD:
                    events.append(MobilityEvent(self.time_s, "turn", vid,
                                                {"to_segment": nxt}))
            if gone:
                self._remove_rows(np.array(gone, dtype=np.int64))

        events.extend(self._spawn_arrivals())
        return events

    def _spawn_arrivals(self) -> list[MobilityEvent]:
        events = []
        for flow in self._flows:
            spec, next_t, backlog = flow
            while next_t <= self.time_s:
                backlog += 1
                next_t += float(self._rng.exponential(1.0 / spec.rate_veh_per_s))
            inserted = True
            while backlog > 0 and inserted:
                inserted = self._try_insert(spec)
                if inserted:
                    backlog -= 1
                    events.append(MobilityEvent(self.time_s, "spawn", self._next_id - 1))
            flow[1] = next_t
            flow[2] = backlog
        return events

    def _try_insert(self, spec: FlowSpec) -> bool:
        base = spec.idm or IdmParams(v0=spec.speed_mps)
        jitter = 1.0 + spec.speed_jitter * float(self._rng.uniform(-1.0, 1.0))
        idm = replace(base, v0=max(0.1, spec.speed_mps * jitter))
        si = self._seg_index[spec.segment_id]
        mask = (self.seg == si) & (self.lane == spec.lane)
        speed = idm.v0
        if np.any(mask):
            rear = np.argmin(np.where(mask, self.s, np.inf))
            entry_gap = self.s[rear] - self.length[rear]
            if entry_gap <= idm.min_gap + DEFAULT_VEHICLE_LENGTH_M:
                return False
            speed = min(idm.v0, float(self.v[rear]) + 1.0)
        self.add_vehicle(spec.segment_id, spec.lane, 0.0, speed, idm,
                         route=list(spec.route) or None)
        return True

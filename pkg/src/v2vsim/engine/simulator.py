"""Slot-level network simulator.

Binds the traffic model, channel, per-link exclusion-ratio control,
location tracking and transmitter selection into one loop:

* every slot: tracking prediction, transmitter selection, physical
  delivery with cumulative interference, bookkeeping;
* every control round (dense during the initial discovery burst):
  location sharing, link activation and bootstrap, signaling-cost
  accounting;
* every feedback window: per-link reliability measurement, the
  interference-budget controller, and broadcast-aware region adaptation.

The data plane always uses true geometry and the stochastic channel; the
protocol control plane only ever sees estimated positions, delivered over
an idealized out-of-band channel whose payload bytes are accounted but
not scheduled.  Four MAC modes share the loop: "cps" (distance-ratio
regions), "ocps" (oracle received-power regions, zero accounted power
signaling), and the "csma" / "rtdma" baselines, which skip the whole
control plane.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..broadcast import (ControlMessage, LOCATION_STEP_M, RegionDescriptor,
                         adapt_receiver_region_broadcast, build_sender_region,
                         encode_control_message, select_signaling_cover)
from ..channel import (ChannelParams, PowerEstimate, RadioModel, ShadowField,
                       calibrate_tx_power_dbm, dbm_to_mw, fading_gain,
                       fading_rng, path_loss_db, update_power_estimate)
from ..exclusion import (InterferenceCandidate, LinkModel,
                         budget_to_interference_power,
                         compute_interference_budget,
                         update_smoothed_reliability)
from ..link_init import (NEIGHBOR_REFERENCE_RANGE_M, LinkRegistry,
                         NeighborReferenceCandidate, SelfReferenceCandidate,
                         SoloInterferer, init_link, is_transient)
from ..mobility import IdmParams, RoadNetwork, RoadSegment, TrafficSim
from ..scheduler import (ConflictGraph, select_transmitters, slot_priorities,
                         slot_priority)
from ..tracking import TrackerBank, UkfParams
from .config import ScenarioConfig
from .metrics import RunMetrics

_LANE_BITS = 6  # track coordinate key = (segment_id << _LANE_BITS) | lane
_DEACTIVATE_FACTOR = 1.05  # hysteresis against link flapping
_CANDIDATE_RANGE_FACTOR = 2.0  # interferer bookkeeping horizon
_RETX_CAP_S = 2.0  # baseline retransmission deadline
_START_SPEED_FACTOR = 0.5  # track prior speed as fraction of limit
_GUARD_SIGMA_FACTOR = 0.75  # boundary guard as fraction of location noise


def _seg_key(segment_id: int, lane: int) -> int:
    return (int(segment_id) << _LANE_BITS) | int(lane)


def _quantize(xy: np.ndarray) -> np.ndarray:
    """Location-sharing wire resolution."""
    return np.round(xy / LOCATION_STEP_M) * LOCATION_STEP_M


class Simulation:
    """One configured run; construct, then call :meth:`run` once."""

    def __init__(self, cfg: ScenarioConfig, observer=None):
        cfg.validate()
        self.cfg = cfg
        self.observer = observer
        self.network = self._build_network(cfg)
        self.sim = TrafficSim(self.network, seed=cfg.seed)
        self._spawned: list[int] = []
        for spec in cfg.vehicles:
            v0 = spec.desired_speed_mps
            if v0 is None:
                v0 = max(spec.speed_mps, 5.0)
            idm = IdmParams(v0=max(v0, 0.5), time_gap=spec.time_gap_s)
            vid = self.sim.add_vehicle(spec.segment_id, spec.lane, spec.s_pos,
                                      spec.speed_mps, idm, frozen=spec.frozen)
            self._spawned.append(vid)
        for flow in cfg.flows:
            from ..mobility import FlowSpec
            self.sim.add_flow(FlowSpec(flow.segment_id, flow.lane,
                                       flow.rate_veh_per_s, flow.speed_mps,
                                       flow.speed_jitter))

        self.params = ChannelParams(
            ref_loss_db=cfg.ref_loss_db, exponent=cfg.path_loss_exponent,
            shadow_sigma_db=cfg.shadow_sigma_db, fading=cfg.fading,
            nakagami_m=cfg.nakagami_m, noise_floor_dbm=cfg.noise_floor_dbm,
            coherence_slots=cfg.coherence_slots)
        self.radio = RadioModel(packet_bytes=cfg.packet_bytes,
                                bitrate_bps=cfg.bitrate_bps)
        self.tx_dbm = (cfg.tx_power_dbm if cfg.tx_power_dbm is not None else
                       calibrate_tx_power_dbm(self.params, self.radio,
                                              cfg.comm_range_m,
                                              cfg.target_reliability))
        self.noise_mw = self.params.noise_floor_mw
        self.shadow = ShadowField(self.params, cfg.seed)
        self.registry = LinkRegistry(cfg.slot_s)
        # tracker measurement noise: location jitter plus wire quantization
        meas = math.sqrt(cfg.gps_sigma_m ** 2 + LOCATION_STEP_M ** 2 / 12.0)
        self.bank = TrackerBank(ukf=UkfParams(meas_sigma_m=meas),
                                defaults=IdmParams(v0=25.0))

        ss = np.random.SeedSequence(cfg.seed).spawn(4)
        self._rng_delivery = np.random.default_rng(ss[0])
        self._rng_gps = np.random.default_rng(ss[1])
        self._rng_csma = np.random.default_rng(ss[2])
        self._rng_rtdma = np.random.default_rng(ss[3])

        self.scheduled = cfg.protocol in ("cps", "ocps")
        self.power_metric = cfg.protocol == "ocps"
        # membership is evaluated on noisy estimated distances, so a vehicle
        # sitting exactly on a region boundary would flap in and out of the
        # conflict graph round to round; treat anything within the tracker
        # uncertainty envelope as inside
        self._guard_m = _GUARD_SIGMA_FACTOR * cfg.gps_sigma_m

        # region membership is sticky state, not a per-slot re-derivation:
        # (sender, receiver) -> member vehicle ids of the current region
        self._sticky: dict[tuple[int, int], frozenset[int]] = {}
        self._duty: dict[int, PowerEstimate] = {}
        self._gen_offset: dict[int, int] = {}
        self._tx_window: dict[int, int] = {}
        self._win_att: dict[tuple[int, int], int] = {}
        self._win_succ: dict[tuple[int, int], int] = {}
        self._packets: dict[int, dict] = {}
        self._csma_backoff: dict[int, int] = {}
        self._rtdma_own: dict[int, int] = {}
        self._rtdma_att: dict[int, int] = {}
        self._rtdma_succ: dict[int, int] = {}
        self._prev_tx_rows: list[int] = []
        self._prev_p: np.ndarray | None = None
        self._oracle_p: np.ndarray | None = None
        self._shadow_epoch = -1
        self._shadow_mat: np.ndarray | None = None
        self._retx_cap = int(round(_RETX_CAP_S / cfg.slot_s))
        self._events = sorted(
            (max(int(round(ev.time_s / cfg.slot_s)), 0), i, ev)
            for i, ev in enumerate(cfg.events))
        self._events_done = 0

        self.metrics = RunMetrics(
            name=cfg.name, protocol=cfg.protocol, seed=cfg.seed,
            slot_s=cfg.slot_s, warmup_slots=cfg.warmup_slots,
            n_slots=cfg.n_slots, target_reliability=cfg.target_reliability)
        self._rebuild_rows()
        for vid in sorted(self._rows):
            self._register_vehicle(vid)

    # -- construction helpers ------------------------------------------

    @staticmethod
    def _build_network(cfg: ScenarioConfig) -> RoadNetwork:
        segs = [RoadSegment(s.segment_id, np.asarray(s.points, dtype=float),
                            lanes=s.lanes, speed_limit=s.speed_limit_mps)
                for s in cfg.segments]
        conns: dict[int, list[int]] = {}
        for src, dst in cfg.connections:
            conns.setdefault(src, []).append(dst)
        return RoadNetwork(segs, conns)

    def _register_vehicle(self, vid: int) -> None:
        """Per-vehicle protocol state; called on placement and spawn."""
        # periodic broadcaster: until observed, assume the nominal duty
        # rather than zero, so unobserved vehicles are never free to strip
        # from a region
        self._duty[vid] = PowerEstimate(
            beta=1.0 / self.cfg.data_period_slots)
        self._tx_window[vid] = 0
        self._packets[vid] = {"gen": None, "delivered": None}
        # staggered generation phases, stable per vehicle
        self._gen_offset[vid] = slot_priority(vid, 0, self.cfg.seed) \
            % self.cfg.data_period_slots
        if self.cfg.protocol == "rtdma":
            self._rtdma_own[vid] = int(
                self._rng_rtdma.integers(self.cfg.rtdma_frame_slots))
            self._rtdma_att[vid] = 0
            self._rtdma_succ[vid] = 0

    def _unregister_vehicle(self, vid: int, slot: int) -> None:
        for key in [k for k in self.registry.active
                    if vid in (k[0], k[1])]:
            self.registry.deactivate(key, slot)
        if vid in self.bank:
            self.bank.drop(vid)
        for d in (self._duty, self._tx_window, self._packets,
                  self._csma_backoff, self._rtdma_own, self._rtdma_att,
                  self._rtdma_succ, self._gen_offset):
            d.pop(vid, None)

    def _rebuild_rows(self) -> None:
        """Refresh row-aligned caches after any population change."""
        self._vids = self.sim.ids.copy()
        self._rows = {int(v): i for i, v in enumerate(self._vids)}
        self._n = len(self._vids)
        self._shadow_epoch = -1  # id set changed: shadow matrix stale
        self._oracle_p = None  # row-aligned, so stale as well
        self._rebuild_link_caches()

    def _rebuild_link_caches(self) -> None:
        """K-ratio matrix, link adjacency and receiver lists, row-indexed."""
        n = self._n
        self._kmat = np.full((n, n), np.nan)
        self._linkmat = np.zeros((n, n), dtype=bool)
        recv: dict[int, list[tuple[int, int]]] = {}
        for (s, r), entry in self.registry.active.items():
            si, ri = self._rows.get(s), self._rows.get(r)
            if si is None or ri is None:
                continue
            self._kmat[si, ri] = entry.model.k
            self._linkmat[si, ri] = True
            recv.setdefault(s, []).append((ri, r))
        self._recv_rows = {}
        self._recv_vids = {}
        for s, pairs in recv.items():
            pairs.sort(key=lambda p: p[1])
            self._recv_rows[s] = np.array([p[0] for p in pairs], dtype=int)
            self._recv_vids[s] = [p[1] for p in pairs]
        for key in [k for k in self._sticky if k not in self.registry.active]:
            del self._sticky[key]
        self._build_stickmat()

    def _build_stickmat(self) -> None:
        n = self._n
        self._stickmat = np.zeros((n, n), dtype=bool)
        for (s, _r), members in self._sticky.items():
            si = self._rows.get(s)
            if si is None:
                continue
            for c in members:
                ci = self._rows.get(c)
                if ci is not None:
                    self._stickmat[si, ci] = True

    def _refresh_sticky(self) -> None:
        """Hysteresis update of region membership from fresh estimates:
        candidates join inside the guard band but only leave once clearly
        outside twice that, so boundary members do not flap with location
        noise between adaptations."""
        d = self._est_d
        guard = self._guard_m
        sticky: dict[tuple[int, int], frozenset[int]] = {}
        for (s, r), entry in self.registry.active.items():
            si, ri = self._rows.get(s), self._rows.get(r)
            if si is None or ri is None:
                continue
            bound = entry.model.k * d[si, ri]
            if not math.isfinite(bound):
                continue
            col = d[:, ri]
            with np.errstate(invalid="ignore"):
                join = col <= bound + guard
                keep = col <= bound + 2.0 * guard
            prev = self._sticky.get((s, r), frozenset())
            ids = {int(self._vids[i]) for i in np.nonzero(join)[0]}
            ids |= {v for v in prev
                    if v in self._rows and keep[self._rows[v]]}
            ids.discard(s)
            ids.add(r)
            sticky[(s, r)] = frozenset(ids)
        self._sticky = sticky
        self._build_stickmat()

    # -- per-slot geometry ---------------------------------------------

    def _true_distances(self) -> np.ndarray:
        xy = self.sim.positions_xy()
        diff = xy[:, None, :] - xy[None, :, :]
        self._true_xy = xy
        return np.hypot(diff[..., 0], diff[..., 1])

    def _estimate_positions(self) -> None:
        """Estimated plane coordinates of every tracked vehicle (NaN rows
        for vehicles nobody has announced yet)."""
        n = self._n
        est = np.full((n, 2), np.nan)
        by_key: dict[int, tuple[list[int], list[float]]] = {}
        for vid in self.bank.ids:
            row = self._rows.get(vid)
            if row is None:
                continue
            key = self.bank.segment_of(vid)
            by_key.setdefault(key, ([], []))[0].append(row)
            by_key[key][1].append(self.bank.position(vid))
        for key, (rowlist, slist) in by_key.items():
            seg = self.network.segments[key >> _LANE_BITS]
            lane = key & ((1 << _LANE_BITS) - 1)
            s_arr = np.clip(np.asarray(slist), 0.0, seg.length)
            est[rowlist] = seg.xy_of(s_arr, np.full(len(slist), lane))
        self._est_xy = est
        diff = est[:, None, :] - est[None, :, :]
        self._est_d = np.hypot(diff[..., 0], diff[..., 1])

    def _shadow_matrix(self, slot: int) -> np.ndarray:
        epoch = self.shadow.epoch_of(slot)
        if epoch != self._shadow_epoch or self._shadow_mat is None \
                or len(self._shadow_mat) != self._n:
            self._shadow_mat = self.shadow.matrix_db(self._vids, slot)
            self._shadow_epoch = epoch
        return self._shadow_mat

    def _expected_power_u(self, distances) -> np.ndarray:
        """Mean received power in noise units from path loss alone (the
        control plane's channel predictor; no shadowing knowledge)."""
        pr_dbm = self.tx_dbm - path_loss_db(distances, self.params)
        return dbm_to_mw(pr_dbm) / self.noise_mw

    # -- control plane --------------------------------------------------

    def _control_round(self, slot: int) -> int:
        """Returns the accounted signaling bytes of this round."""
        sent = 0
        if self.scheduled:
            self._share_locations(slot)
            self._estimate_positions()
            self._maintain_links_estimated(slot)
            self._rebuild_link_caches()
            if self.power_metric:
                self._refresh_oracle(slot)
                # a real deployment would have to ship the pairwise receive
                # powers this variant reads for free: 2 bytes per ordered pair
                n = self._n
                self.metrics.count_oracle_bytes(slot, 2 * n * (n - 1))
            else:
                self._refresh_sticky()
            sent = self._account_signaling(slot)
        else:
            self._maintain_links_true(slot)
            self._rebuild_link_caches()
        self.registry.gc(slot)
        return sent

    def _share_locations(self, slot: int) -> None:
        """Everyone reports a quantized noisy location; trackers update."""
        xy = self.sim.positions_xy()
        sigma = self.cfg.gps_sigma_m
        leads: dict[int, int | None] = {}
        for vid in sorted(self._rows):
            row = self._rows[vid]
            z = xy[row] + sigma * self._rng_gps.standard_normal(2)
            z = _quantize(z)
            state = self.sim.vehicle(vid)
            seg = self.network.segments[state.segment_id]
            s_meas = seg.project(z)
            key = _seg_key(state.segment_id, state.lane)
            if vid in self.bank:
                self.bank.update(vid, s_meas, segment=key)
            else:
                hint = seg.speed_limit * _START_SPEED_FACTOR
                self.bank.start_track(vid, key, s_meas, speed_mps=hint)
            leads[vid] = state.lead_id
        # second pass, so leads announced later in the same round count too
        for vid, lead in sorted(leads.items()):
            if lead is not None and lead not in self.bank:
                lead = None
            self.bank.set_lead(vid, lead)
            if lead is None:
                continue
            if self.bank.segment_of(lead) != self.bank.segment_of(vid):
                continue
            # platoon coupling: gap re-derived from the shared locations,
            # so its uncertainty is that of two position estimates
            gap = self.bank.position(lead) - self.bank.position(vid) - 4.5
            self.bank.set_gap(vid, max(gap, 0.1),
                              variance=2.0 * self.bank.ukf.meas_sigma_m ** 2)

    def _maintain_links_estimated(self, slot: int) -> None:
        d = self._est_d
        n = self._n
        rng_m = self.cfg.comm_range_m
        with np.errstate(invalid="ignore"):
            near = d <= rng_m
        np.fill_diagonal(near, False)
        # deactivate out-of-range links first so they can serve as dormant
        for key in sorted(self.registry.active):
            s, r = key
            si, ri = self._rows.get(s), self._rows.get(r)
            if si is None or ri is None:
                self.registry.deactivate(key, slot)
                continue
            dd = d[si, ri]
            if not math.isfinite(dd) or dd > rng_m * _DEACTIVATE_FACTOR:
                self.registry.deactivate(key, slot)
        refs = self._reference_tables()
        for si, ri in np.argwhere(near):
            s, r = int(self._vids[si]), int(self._vids[ri])
            key = (s, r)
            entry = self.registry.lookup(key)
            if entry is None:
                self._activate_link(key, si, ri, slot, refs)
            elif self.registry.needs_reinit(key, float(d[si, ri])):
                model, method = self._bootstrap_model(key, si, ri, refs)
                self.registry.mark_reinit(key, model, slot,
                                          float(d[si, ri]), method)
            else:
                entry.last_seen_slot = slot

    def _maintain_links_true(self, slot: int) -> None:
        """Baselines: in-range bookkeeping only, no ratio bootstrap."""
        d = self._true_distances()
        rng_m = self.cfg.comm_range_m
        for key in sorted(self.registry.active):
            si, ri = self._rows.get(key[0]), self._rows.get(key[1])
            if si is None or ri is None or d[si, ri] > rng_m * _DEACTIVATE_FACTOR:
                self.registry.deactivate(key, slot)
        near = d <= rng_m
        np.fill_diagonal(near, False)
        for si, ri in np.argwhere(near):
            s, r = int(self._vids[si]), int(self._vids[ri])
            if self.registry.lookup((s, r)) is None:
                model = LinkModel(sender=s, receiver=r,
                                  target=self.cfg.target_reliability,
                                  ewma_weight=self.cfg.ewma_weight)
                self.registry.add((s, r), model, slot, float(d[si, ri]))

    def _reference_tables(self):
        """Row-indexed arrays of converged links, for bootstrap reference
        lookups."""
        rows_s, rows_r, ks = [], [], []
        links = []
        for (s, r), entry in sorted(self.registry.active.items()):
            if not entry.model.converged:
                continue
            si, ri = self._rows.get(s), self._rows.get(r)
            if si is None or ri is None:
                continue
            rows_s.append(si)
            rows_r.append(ri)
            ks.append(entry.model.k)
            links.append((s, r))
        return (np.array(rows_s, dtype=int), np.array(rows_r, dtype=int),
                np.array(ks), links)

    def _closing_speed(self, s: int, r: int) -> float:
        """Estimated range rate along the line between the endpoints."""
        srow, rrow = self._rows[s], self._rows[r]
        delta = self._est_xy[srow] - self._est_xy[rrow]
        dist = float(np.hypot(*delta))
        if not math.isfinite(dist) or dist <= 0:
            return 0.0
        u = delta / dist
        vel = np.zeros(2)
        for vid, sign in ((s, 1.0), (r, -1.0)):
            key = self.bank.segment_of(vid)
            seg = self.network.segments[key >> _LANE_BITS]
            heading = seg.heading_of(
                float(np.clip(self.bank.position(vid), 0.0, seg.length)))
            vel += sign * self.bank.speed(vid) * heading
        return float(vel @ u)

    def _activate_link(self, key, si: int, ri: int, slot: int, refs) -> None:
        s, r = key
        d_now = float(self._est_d[si, ri])
        same_seg = (self.bank.segment_of(s) >> _LANE_BITS) == \
                   (self.bank.segment_of(r) >> _LANE_BITS)
        transient = is_transient(abs(self._closing_speed(s, r)), same_seg)
        recalled = self.registry.recall_dormant(key, slot)
        if recalled is not None:
            model = LinkModel(sender=s, receiver=r,
                              target=self.cfg.target_reliability,
                              k=recalled, ewma_weight=self.cfg.ewma_weight)
            self.registry.add(key, model, slot, d_now, transient=transient,
                              method="dormant")
            return
        model, method = self._bootstrap_model(key, si, ri, refs)
        self.registry.add(key, model, slot, d_now, transient=transient,
                          method=method)

    def _bootstrap_model(self, key, si: int, ri: int, refs):
        s, r = key
        rows_s, rows_r, ks, links = refs
        d = self._est_d
        p_new = float(self._expected_power_u(d[si, ri]))
        self_refs, neigh_refs = [], []
        if len(links):
            same_recv = rows_r == ri
            for j in np.nonzero(same_recv)[0]:
                if links[j][0] == s:
                    continue
                self_refs.append(SelfReferenceCandidate(
                    sender=links[j][0], k=float(ks[j]),
                    target=self.cfg.target_reliability,
                    power=float(self._expected_power_u(d[rows_s[j], ri])),
                    distance_to_new_sender=float(d[rows_s[j], si]),
                    distance_to_receiver=float(d[rows_s[j], ri])))
            if not self_refs:
                near = (d[rows_s, si] <= NEIGHBOR_REFERENCE_RANGE_M) & \
                       (d[rows_r, ri] <= NEIGHBOR_REFERENCE_RANGE_M)
                for j in np.nonzero(near)[0]:
                    if links[j] == (s, r):
                        continue
                    neigh_refs.append(NeighborReferenceCandidate(
                        sender=links[j][0], receiver=links[j][1],
                        k=float(ks[j]), target=self.cfg.target_reliability,
                        power=float(self._expected_power_u(
                            d[rows_s[j], rows_r[j]])),
                        metric=float(d[rows_s[j], si] + d[rows_r[j], ri])))
        cands = self._candidates(si, ri)
        solo = [SoloInterferer(metric=c.metric, vehicle=c.vehicle,
                               power=float(self._expected_power_u(
                                   d[self._rows[c.vehicle], ri])))
                for c in cands]
        template = LinkModel(sender=s, receiver=r,
                             target=self.cfg.target_reliability,
                             ewma_weight=self.cfg.ewma_weight)
        return init_link(template, p_new, float(d[si, ri]), self_refs,
                         neigh_refs, solo, cands, self.radio)

    def _candidates(self, si: int, ri: int) -> list[InterferenceCandidate]:
        """Interference-candidate list of link (row si -> row ri), metric
        ascending by construction of the sort in the adapters."""
        d = self._est_d
        col = d[:, ri]
        horizon = self.cfg.comm_range_m * _CANDIDATE_RANGE_FACTOR
        with np.errstate(invalid="ignore"):
            ok = (col <= horizon) & np.isfinite(col)
        ok[si] = ok[ri] = False
        rows = np.nonzero(ok)[0]
        if not len(rows):
            return []
        if self.power_metric and self._oracle_p is not None:
            metric = self._oracle_p[si, ri] / self._oracle_p[rows, ri]
        else:
            metric = col[rows] / d[si, ri]
        if self.power_metric and self._oracle_p is not None:
            power = self._oracle_p[rows, ri] / self.noise_mw
        else:
            power = self._expected_power_u(col[rows])
        out = []
        for j, row in enumerate(rows):
            vid = int(self._vids[row])
            beta = (self._duty[vid].beta if vid in self._duty
                    else 1.0 / self.cfg.data_period_slots)
            out.append(InterferenceCandidate(metric=float(metric[j]),
                                             vehicle=vid,
                                             interference=float(
                                                 beta * power[j])))
        return out

    def _refresh_oracle(self, slot: int) -> None:
        d = self._true_distances()
        pr_dbm = self.tx_dbm - path_loss_db(d, self.params) \
            + self._shadow_matrix(slot)
        self._oracle_p = dbm_to_mw(pr_dbm)

    def _member_sets(self) -> dict[int, dict[int, frozenset[int]]]:
        """Estimated region membership of every active link, per sender."""
        d = self._est_d
        out: dict[int, dict[int, frozenset[int]]] = {}
        for s, r_rows in self._recv_rows.items():
            si = self._rows[s]
            regions = {}
            for ri, r in zip(r_rows, self._recv_vids[s]):
                k = self._kmat[si, ri]
                if not math.isfinite(k):
                    continue
                if self.power_metric and self._oracle_p is not None:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        inside = self._oracle_p[:, ri] * k \
                            >= self._oracle_p[si, ri]
                else:
                    bound = k * d[si, ri]
                    if bound > 0.0:
                        bound += self._guard_m
                    with np.errstate(invalid="ignore"):
                        inside = d[:, ri] <= bound
                    for v in self._sticky.get((s, r), ()):
                        vi = self._rows.get(v)
                        if vi is not None:
                            inside[vi] = True
                inside[si] = False
                inside[ri] = True  # a receiver always silences itself
                regions[r] = frozenset(
                    int(v) for v in self._vids[np.nonzero(inside)[0]])
            if regions:
                out[s] = regions
        return out

    def _account_signaling(self, slot: int) -> int:
        """Encoded control traffic of one round: every announced vehicle
        shares its location; senders append a covering subset of their
        receiver regions."""
        members = self._member_sets()
        total = 0
        for s in sorted(self._rows):
            si = self._rows[s]
            own = self._est_xy[si]
            if not np.all(np.isfinite(own)):
                continue
            regions = []
            if s in members:
                sr = build_sender_region(s, members[s])
                for r in select_signaling_cover(sr):
                    ri = self._rows.get(r)
                    if ri is None or not np.all(
                            np.isfinite(self._est_xy[ri])):
                        continue
                    regions.append(RegionDescriptor(
                        rel_xy=tuple(self._est_xy[ri] - own),
                        k=float(self._kmat[si, ri])))
            msg = ControlMessage(sender=s, sender_xy=tuple(own),
                                 regions=tuple(regions), locations=())
            total += len(encode_control_message(msg))
        return self.metrics.count_control_bytes(slot, total)

    # -- feedback loop --------------------------------------------------

    def _feedback_round(self, slot: int) -> None:
        window = self.cfg.feedback_window_slots
        if self.scheduled:
            self._estimate_positions()
            snapshot = self._member_sets()
            regions = {s: build_sender_region(s, regs)
                       for s, regs in snapshot.items()}
            for key in sorted(self._win_att):
                entry = self.registry.lookup(key)
                att = self._win_att.get(key, 0)
                if entry is None or att == 0:
                    continue
                s, r = key
                si, ri = self._rows.get(s), self._rows.get(r)
                if si is None or ri is None:
                    continue
                link = entry.model
                y = self._win_succ.get(key, 0) / att
                y_prev = link.y_smooth if link.y_valid else y
                # continuity correction: a finite window cannot attest to
                # reliability closer to 0/1 than half a count
                y_ctl = float(np.clip(y, 0.5 / att, 1.0 - 0.5 / att))
                raw = compute_interference_budget(link, y_ctl, self.radio)
                d_sr = float(self._est_d[si, ri])
                if not math.isfinite(d_sr) or d_sr <= 0.0:
                    d_sr = self.cfg.comm_range_m
                snr_u = float(self._expected_power_u(d_sr))
                delta_u = budget_to_interference_power(
                    raw.delta, y_ctl, link.target, snr_u, self.radio)
                budget = replace(raw, delta=delta_u)
                sr = regions.get(s)
                union = sr.union_without(r) if sr is not None \
                    else frozenset()
                cands = self._candidates(si, ri)
                if not self.power_metric:
                    # a sticky member whose estimated metric wandered past
                    # the boundary is still a member until removed here
                    sticky = self._sticky.get(key, frozenset())
                    cands = [replace(c, metric=link.k)
                             if c.metric > link.k and c.vehicle in sticky
                             else c for c in cands]
                res = adapt_receiver_region_broadcast(
                    link, budget, cands, union,
                    protect_covered=self.cfg.protect_covered)
                k_before = link.k
                link.k = res.k
                if not self.power_metric:
                    kept = {c.vehicle for c in cands if c.metric <= res.k}
                    kept.difference_update(res.removed)
                    kept.add(r)
                    self._sticky[key] = frozenset(kept)
                update_smoothed_reliability(link, y)
                self.metrics.count_window(slot, s, r, att,
                                          self._win_succ.get(key, 0), link.k)
                if self.cfg.record_controller:
                    self.metrics.count_controller(
                        slot, s, r, y_ctl, y_prev, raw.slope, raw.delta,
                        delta_u, k_before, link.k)
            self._rebuild_link_caches()
        else:
            for key in sorted(self._win_att):
                att = self._win_att.get(key, 0)
                if att and self.registry.lookup(key) is not None:
                    self.metrics.count_window(slot, key[0], key[1], att,
                                              self._win_succ.get(key, 0), 0.0)
        for vid in sorted(self._tx_window):
            frac = self._tx_window[vid] / window
            self._duty[vid] = update_power_estimate(self._duty[vid], None,
                                                    frac)
            self._tx_window[vid] = 0
        self._win_att.clear()
        self._win_succ.clear()

    # -- data plane -----------------------------------------------------

    def _generate_packets(self, slot: int) -> None:
        period = self.cfg.data_period_slots
        for vid in self._packets:
            if slot % period == self._gen_offset[vid]:
                self._packets[vid] = {"gen": slot,
                                      "delivered": set(),
                                      "transmitted": False}
                if self.cfg.protocol == "csma":
                    self._csma_backoff[vid] = int(
                        self._rng_csma.integers(self.cfg.csma_cw_slots))

    def _pending(self, slot: int) -> list[int]:
        out = []
        for vid in sorted(self._packets):
            pkt = self._packets[vid]
            if pkt["gen"] is None:
                continue
            if self.scheduled:
                if not pkt["transmitted"]:
                    out.append(vid)
                continue
            if slot - pkt["gen"] >= self._retx_cap:
                continue
            targets = self._recv_vids.get(vid, [])
            if any(r not in pkt["delivered"] for r in targets):
                out.append(vid)
        return out

    def _select_scheduled(self, pending: list[int], slot: int) -> list[int]:
        if not pending:
            return []
        rows = np.array([self._rows[v] for v in pending], dtype=int)
        if self.power_metric and self._oracle_p is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                thr = self._oracle_p[rows, :] / self._kmat[rows, :]
                # NaN/inf thresholds (no link, empty region) compare False
                inside = (self._oracle_p[rows, :][None, :, :]
                          >= thr[:, None, :]).any(axis=2)
        else:
            rad = self._kmat[rows, :] * self._est_d[rows, :]
            # nonempty regions only: the guard must not conjure an exclusion
            # region out of a zero radius
            rad = np.where(rad > 0.0, rad + self._guard_m, rad)
            with np.errstate(invalid="ignore"):
                inside = (self._est_d[rows, :][None, :, :]
                          <= rad[:, None, :]).any(axis=2)
            stick = self._stickmat[np.ix_(rows, rows)].T
            inside |= stick
        adj = inside | inside.T
        adj |= self._linkmat[np.ix_(rows, rows)] \
            | self._linkmat[np.ix_(rows, rows)].T
        np.fill_diagonal(adj, False)
        graph = ConflictGraph(tuple(pending), adj)
        pri = slot_priorities(pending, slot, self.cfg.seed)
        sched = select_transmitters(graph, pri, slot)
        return sorted(sched.transmitters)

    def _select_csma(self, pending: list[int], slot: int) -> list[int]:
        busy = np.zeros(self._n, dtype=bool)
        if self._prev_tx_rows and self._prev_p is not None \
                and self._prev_p.shape[1] == self._n:
            heard = self._prev_p.sum(axis=0)
            busy = heard > dbm_to_mw(self.cfg.csma_sense_dbm)
        out = []
        for vid in pending:
            row = self._rows[vid]
            if busy[row]:
                continue
            back = self._csma_backoff.get(vid, 0)
            if back > 0:
                self._csma_backoff[vid] = back - 1
                continue
            out.append(vid)
        return out

    def _select_rtdma(self, pending: list[int], slot: int) -> list[int]:
        pos = slot % self.cfg.rtdma_frame_slots
        return [v for v in pending if self._rtdma_own.get(v) == pos]

    def _deliver(self, transmitters: list[int], slot: int) -> tuple[int, int]:
        """Physical reception of this slot; returns (attempts, deliveries)."""
        cfg = self.cfg
        if not transmitters:
            self._prev_tx_rows = []
            self._prev_p = None
            return 0, 0
        d = self._true_distances()
        rows = np.array([self._rows[v] for v in transmitters], dtype=int)
        pr_dbm = self.tx_dbm - path_loss_db(d[rows, :], self.params) \
            + self._shadow_matrix(slot)[rows, :]
        p = dbm_to_mw(pr_dbm)
        if self.params.fading != "none":
            p = p * fading_gain(self.params, fading_rng(cfg.seed, slot),
                                size=p.shape)
        col_sum = p.sum(axis=0)
        in_t = np.zeros(self._n, dtype=bool)
        in_t[rows] = True
        attempts = deliveries = 0
        count = slot >= cfg.warmup_slots
        for ti, t in enumerate(transmitters):
            self._tx_window[t] += 1
            pkt = self._packets[t]
            pkt["transmitted"] = True
            if cfg.protocol == "rtdma":
                self._rtdma_att[t] = self._rtdma_att.get(t, 0)
                self._rtdma_succ[t] = self._rtdma_succ.get(t, 0)
            r_rows = self._recv_rows.get(t)
            if r_rows is None or not len(r_rows):
                if self.scheduled:
                    self._packets[t] = {"gen": None, "delivered": None}
                continue
            sig = p[ti, r_rows]
            interf = col_sum[r_rows] - sig
            sinr = sig / (self.noise_mw + interf)
            pd = self.radio.pdr(sinr)
            receivable = ~in_t[r_rows]
            draw = np.ones(len(r_rows))
            if receivable.any():
                draw[receivable] = self._rng_delivery.random(
                    int(receivable.sum()))
            ok = receivable & (draw < pd)
            delay = slot - pkt["gen"]
            for j, r in enumerate(self._recv_vids[t]):
                key = (t, r)
                self._win_att[key] = self._win_att.get(key, 0) + 1
                success = bool(ok[j])
                attempts += 1
                if cfg.protocol == "rtdma":
                    self._rtdma_att[t] += 1
                first = success and (self.scheduled
                                     or r not in pkt["delivered"])
                if success:
                    deliveries += 1
                    self._win_succ[key] = self._win_succ.get(key, 0) + 1
                    if cfg.protocol == "rtdma":
                        self._rtdma_succ[t] += 1
                    if not self.scheduled:
                        pkt["delivered"].add(r)
                if count:
                    self.metrics.count_attempt(
                        slot, t, r, success, delay if first else None)
            if self.scheduled:
                self._packets[t] = {"gen": None, "delivered": None}
            elif cfg.protocol == "csma":
                self._csma_backoff[t] = int(
                    self._rng_csma.integers(1, cfg.csma_cw_slots + 1))
        self._prev_tx_rows = list(rows)
        self._prev_p = p
        return attempts, deliveries

    def _rtdma_frame_end(self) -> None:
        for vid in sorted(self._rtdma_att):
            att = self._rtdma_att[vid]
            if att and self._rtdma_succ.get(vid, 0) / att < 0.5:
                self._rtdma_own[vid] = int(
                    self._rng_rtdma.integers(self.cfg.rtdma_frame_slots))
            self._rtdma_att[vid] = 0
            self._rtdma_succ[vid] = 0

    # -- events ---------------------------------------------------------

    def _apply_events(self, slot: int) -> None:
        while self._events_done < len(self._events) \
                and self._events[self._events_done][0] <= slot:
            _, _, ev = self._events[self._events_done]
            self._events_done += 1
            vid = self._spawned[ev.vehicle]
            if vid in self._rows and ev.action == "set_speed":
                self.sim.v[self._rows[vid]] = ev.value

    def _handle_mobility_events(self, events, slot: int) -> None:
        changed = False
        for ev in events:
            if ev.kind == "despawn":
                self._unregister_vehicle(ev.vehicle_id, slot)
                changed = True
            elif ev.kind == "spawn":
                changed = True
        if changed:
            self._rebuild_rows()
            for vid in sorted(self._rows):
                if vid not in self._packets:
                    self._register_vehicle(vid)

    # -- main loop ------------------------------------------------------

    def run(self) -> RunMetrics:
        cfg = self.cfg
        burst = cfg.discovery_slots
        for slot in range(cfg.n_slots):
            self._apply_events(slot)
            if self.scheduled:
                self.bank.predict_all(cfg.slot_s)
                self._estimate_positions()
            control_bytes = 0
            if slot % cfg.control_period_slots == 0 or (
                    slot < burst and slot % cfg.discovery_period_slots == 0):
                control_bytes = self._control_round(slot)
            if slot and slot % cfg.feedback_window_slots == 0:
                self._feedback_round(slot)
            self._generate_packets(slot)
            pending = self._pending(slot)
            if self.scheduled:
                txs = self._select_scheduled(pending, slot)
            elif cfg.protocol == "csma":
                txs = self._select_csma(pending, slot)
            else:
                txs = self._select_rtdma(pending, slot)
            attempts, deliveries = self._deliver(txs, slot)
            self.metrics.count_slot(slot, len(txs), attempts, deliveries,
                                    control_bytes)
            if cfg.protocol == "rtdma" and \
                    slot % cfg.rtdma_frame_slots == cfg.rtdma_frame_slots - 1:
                self._rtdma_frame_end()
            events = self.sim.step(cfg.slot_s)
            if events:
                self._handle_mobility_events(events, slot)
            if self.observer is not None:
                self.observer(self, slot)
        self.metrics.n_vehicles_end = self.sim.n_vehicles
        return self.metrics


def run_scenario(cfg: ScenarioConfig, outdir=None,
                 observer=None) -> RunMetrics:
    """Convenience wrapper: build, run, optionally export."""
    sim = Simulation(cfg, observer=observer)
    metrics = sim.run()
    if outdir is not None:
        from .metrics import write_metrics
        write_metrics(metrics, outdir)
    return metrics

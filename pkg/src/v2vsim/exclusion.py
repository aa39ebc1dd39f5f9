"""Exclusion-region interference model and its reliability controller.

Every directed link (sender S, receiver R) owns an exclusion region: the
disk around R whose radius is `k` times the S-R distance.  A vehicle inside
the region must stay silent while S transmits to R; outside it may transmit
concurrently.  A per-link feedback controller turns the gap between measured
and target delivery ratio into a required change of tolerable interference
power, and the region adapts by admitting or releasing candidate vehicles
nearest-first / farthest-first until that budget is met.

Candidates carry a scale-free `metric` (distance ratio D(C,R)/D(S,R) for the
geometric model; a power ratio for the oracle variant) so the same
adaptation code serves both membership rules: C is a member iff metric <= k.
Interference values on the controller path are expressed in noise-floor
units so that budgets and candidate contributions are commensurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import PowerEstimate, RadioModel

#: Slack for float comparisons when accumulating interference budgets.
_EPS = 1e-12
#: Reliability samples are clamped into [CLIP, 1-CLIP] before control math.
_CLIP = 1e-4
#: Step of the two-sided difference quotient at the target singularity.
_H = 1e-6


@dataclass
class LinkModel:
    """Controller state of one directed link.

    `k` is the exclusion ratio (region radius = k * sender-receiver
    distance).  `y_smooth` is the EWMA of measured reliability with weight
    `ewma_weight` on history; it is seeded by the first sample.
    """

    sender: int
    receiver: int
    target: float
    k: float = 0.0
    ewma_weight: float = 0.2
    y_smooth: float = 0.0
    y_valid: bool = False
    last_y: float | None = None
    ok_windows: int = 0
    converged: bool = False

    def __post_init__(self):
        if not 0.0 < self.target < 1.0:
            raise ValueError("target reliability must lie in (0, 1)")
        if not 0.0 <= self.ewma_weight < 1.0:
            raise ValueError("ewma_weight must lie in [0, 1)")
        if self.k < 0.0:
            raise ValueError("exclusion ratio must be non-negative")


@dataclass(frozen=True, order=True)
class InterferenceCandidate:
    """One potential interferer near a receiver.

    Ordering is by (metric, vehicle) so ties break toward the lower id.
    `interference` is the expected contribution in noise-floor units.
    """

    metric: float
    vehicle: int
    interference: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class ExclusionRegion:
    """Snapshot of one link's region: ratio plus the member vehicles."""

    sender: int
    receiver: int
    k: float
    members: tuple[int, ...]


@dataclass(frozen=True)
class InterferenceBudget:
    """Controller output for one feedback window.

    `delta` is the required change of tolerable interference power (noise
    units): negative means the region must grow (tolerate less), positive
    means it may shrink.  `slope` is the linearization a(t) used; `y_smooth`
    the post-window smoothed reliability for the caller to store.
    """

    delta: float
    slope: float
    y_smooth: float


def can_transmit_concurrently(d_candidate_receiver: float,
                              d_sender_receiver: float, k: float) -> bool:
    """Concurrency rule: allowed iff strictly outside the region disk.

    The boundary belongs to the region, so a candidate exactly on it must
    stay silent.
    """
    return d_candidate_receiver > k * d_sender_receiver


def region_members(candidates, k: float):
    """Member subset of a candidate list under ratio k (boundary included)."""
    return [c for c in candidates if c.metric <= k]


def expected_interference(est: PowerEstimate, noise_mw: float) -> float:
    """Expected interference of a source in noise units: beta * power / noise."""
    if noise_mw <= 0:
        raise ValueError("noise power must be positive")
    return est.beta * est.power_mw / noise_mw


def update_smoothed_reliability(link: LinkModel, y_meas: float) -> LinkModel:
    """Fold one window's measured reliability into the link EWMA state."""
    y = float(np.clip(y_meas, 0.0, 1.0))
    c = link.ewma_weight
    link.y_smooth = y if not link.y_valid else c * link.y_smooth + (1.0 - c) * y
    link.y_valid = True
    link.last_y = y
    link.ok_windows = link.ok_windows + 1 if y >= link.target else 0
    if link.ok_windows >= 2:
        link.converged = True
    return link


def compute_interference_budget(link: LinkModel, y_meas: float,
                                radio: RadioModel,
                                drift: float = 0.0) -> InterferenceBudget:
    """Required interference change for one feedback window.

    Pure: reads but does not update the link's EWMA state (call
    update_smoothed_reliability afterwards).  The linearization slope is the
    reliability-vs-SINR secant between the measured point and the target;
    at the singularity y == target it degenerates to the two-sided
    difference quotient of the inverse curve.  `drift` is the predicted
    change of interference from outside the region and is subtracted.
    """
    y = float(np.clip(y_meas, _CLIP, 1.0 - _CLIP))
    c = link.ewma_weight
    y_prev = link.y_smooth if link.y_valid else y
    y_s = c * y_prev + (1.0 - c) * y
    numerator = (1.0 + c) * y_s - c * y_prev - link.target
    if abs(link.target - y) < 1e-9:
        slope = 2.0 * _H / (radio.sinr_for(link.target + _H)
                            - radio.sinr_for(link.target - _H))
    else:
        slope = (link.target - y) / (radio.sinr_for(link.target)
                                     - radio.sinr_for(y))
    delta = numerator / ((1.0 - c) * slope) - drift
    return InterferenceBudget(delta=delta, slope=slope, y_smooth=y_s)


def budget_to_interference_power(delta: float, y_meas: float, target: float,
                                 snr_linear: float,
                                 radio: RadioModel) -> float:
    """Convert a reliability-domain budget into interference power.

    `delta` comes from compute_interference_budget and lives on the SINR
    axis of the delivery curve; region adaptation spends it against expected
    interference powers.  The conversion evaluates the tolerable
    interference I(s) = snr/s - 1 (units of snr_linear, noise = 1) at the
    measured operating point and at the post-budget point, bounding the
    latter between the measured and the target SINR so one window never
    over- or undershoots the target operating point, no matter how steep
    the local linearization was.  Sign is preserved: positive delta yields
    a nonnegative tolerable-interference increase, negative a nonpositive
    one.
    """
    if snr_linear <= 0.0:
        raise ValueError("snr_linear must be positive")
    y = float(np.clip(y_meas, _CLIP, 1.0 - _CLIP))
    s_now = radio.sinr_for(y)
    s_tgt = radio.sinr_for(target)
    lo, hi = (s_now, s_tgt) if s_now <= s_tgt else (s_tgt, s_now)
    s_next = float(np.clip(s_now - delta, lo, hi))
    i_now = max(snr_linear / s_now - 1.0, 0.0)
    i_next = max(snr_linear / s_next - 1.0, 0.0)
    return i_next - i_now


@dataclass(frozen=True)
class AdaptResult:
    """Outcome of one region adaptation."""

    k: float
    added: tuple[int, ...] = ()
    removed: tuple[int, ...] = ()
    saturated: bool = False


def grow_region(k: float, outsiders, needed: float) -> AdaptResult:
    """Admit non-members nearest-first until their cumulative expected
    interference covers `needed`; the last admitted vehicle lands on the new
    region boundary.  Runs out of candidates -> cover them all and flag
    saturation."""
    if needed <= 0.0:
        return AdaptResult(k=k)
    added: list[int] = []
    acc = 0.0
    new_k = k
    for cand in outsiders:
        added.append(cand.vehicle)
        acc += cand.interference
        new_k = max(new_k, cand.metric)
        if acc >= needed - _EPS:
            return AdaptResult(k=new_k, added=tuple(added))
    return AdaptResult(k=new_k, added=tuple(added), saturated=True)


def shrink_region(members, budget: float) -> AdaptResult | None:
    """Release members farthest-first while the cumulative released
    interference stays within `budget`; the farthest survivor defines the
    new boundary.  Returns None for an empty region (ratio unchanged)."""
    if not members:
        return None
    removed: list[int] = []
    left = budget
    ordered = sorted(members, reverse=True)
    idx = 0
    for cand in ordered:
        if cand.interference <= left + _EPS:
            removed.append(cand.vehicle)
            left -= cand.interference
            idx += 1
        else:
            break
    if idx == len(ordered):
        return AdaptResult(k=0.0, removed=tuple(removed))
    return AdaptResult(k=ordered[idx].metric, removed=tuple(removed))


def adapt_exclusion_ratio(link: LinkModel, budget: InterferenceBudget,
                          candidates) -> AdaptResult:
    """One plain adaptation step (no broadcast coupling).

    Zero budget keeps the ratio; a negative budget grows the region through
    the sorted non-members; a positive one shrinks it through the sorted
    members.  Candidate lists may arrive unsorted.
    """
    cands = sorted(candidates)
    if budget.delta == 0.0:
        return AdaptResult(k=link.k)
    if budget.delta < 0.0:
        outsiders = [c for c in cands if c.metric > link.k]
        return grow_region(link.k, outsiders, -budget.delta)
    res = shrink_region([c for c in cands if c.metric <= link.k], budget.delta)
    return res if res is not None else AdaptResult(k=link.k)

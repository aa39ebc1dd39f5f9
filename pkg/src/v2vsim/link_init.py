"""Exclusion-ratio bootstrap for newly formed and short-lived links.

A link that just came into communication range cannot wait for feedback
windows to learn its exclusion ratio, so it borrows one: preferably from a
converged link sharing its receiver (self-reference), else from a converged
link with nearby endpoints (neighbor-reference), else from a pairwise
analysis that silences every vehicle whose lone transmission would already
break the reliability target.  The borrowed ratio is corrected by one
adaptation pass driven by the power and target differences between the new
link and its reference.  A registry retains ratios of links that recently
went dormant so stop-and-go neighbors resume instantly.

All powers here are noise-normalized (received power divided by the noise
floor), matching the controller conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .channel import RadioModel
from .exclusion import (
    AdaptResult,
    InterferenceBudget,
    LinkModel,
    adapt_exclusion_ratio,
)

#: Endpoint-proximity threshold for neighbor references (meters).
NEIGHBOR_REFERENCE_RANGE_M = 30.0
#: Dormant ratios older than this are not reused.
DORMANT_RETENTION_S = 2.0
#: Dormant entries are dropped entirely after this long.
DORMANT_GC_S = 60.0
#: Relative change of link distance that forces re-initialization of a
#: transient link.
REINIT_DISTANCE_FRACTION = 0.10
#: Closing speed above which a link counts as transient (m/s).
TRANSIENT_CLOSING_SPEED = 5.0


@dataclass(frozen=True)
class SelfReferenceCandidate:
    """Converged link with the same receiver as the new link."""

    sender: int
    k: float
    target: float
    power: float
    distance_to_new_sender: float
    distance_to_receiver: float


@dataclass(frozen=True)
class NeighborReferenceCandidate:
    """Converged link whose endpoints both lie near the new link's."""

    sender: int
    receiver: int
    k: float
    target: float
    power: float
    metric: float

    def __post_init__(self) -> None:
        if self.metric < 0:
            raise ValueError("metric must be nonnegative")


@dataclass(frozen=True)
class SoloInterferer:
    """A vehicle considered by the pairwise fallback."""

    metric: float
    vehicle: int
    power: float


def _target_correction(p_new: float, t_new: float, t_ref: float,
                       radio: RadioModel) -> float:
    if t_new == t_ref:
        return 0.0
    return p_new * (1.0 / radio.sinr_for(t_new) - 1.0 / radio.sinr_for(t_ref))


def seed_from_self_reference(ref: SelfReferenceCandidate, p_new: float,
                             d_new: float, t_new: float,
                             radio: RadioModel) -> tuple[float, float]:
    """Seed ratio and correction budget from a same-receiver reference.

    The seed makes the new link's exclusion disk coincide with the
    reference's; the budget then accounts for the signal-power difference
    and any reliability-target difference.
    """
    if d_new <= 0:
        raise ValueError("link distance must be positive")
    k_seed = ref.distance_to_receiver * ref.k / d_new
    delta = (p_new - ref.power) + _target_correction(p_new, t_new,
                                                     ref.target, radio)
    return k_seed, delta


def seed_from_neighbor_reference(ref: NeighborReferenceCandidate,
                                 p_new: float, t_new: float,
                                 radio: RadioModel) -> tuple[float, float]:
    """Seed ratio and correction budget from a nearby twin link: the ratio
    is copied and the budget uses the reference link's own signal power."""
    delta = (p_new - ref.power) + _target_correction(p_new, t_new,
                                                     ref.target, radio)
    return ref.k, delta


def pairwise_fallback_ratio(p_signal: float, target: float, interferers,
                            radio: RadioModel) -> float:
    """Smallest ratio silencing every vehicle whose lone transmission drops
    the link below target (light-traffic bootstrap; no references exist)."""
    k = 0.0
    for c in interferers:
        if radio.pdr(p_signal / (1.0 + c.power)) < target:
            k = max(k, c.metric)
    return k


def init_link(link: LinkModel, p_new: float, d_new: float,
              self_refs, neighbor_refs, solo_interferers,
              candidates, radio: RadioModel) -> tuple[LinkModel, str]:
    """Initialize a new link's ratio, preferring self-reference, then
    neighbor-reference, then the pairwise fallback.

    `candidates` is the interference-candidate list used by the one-pass
    correction of reference-based seeds.  Returns the initialized link and
    which method produced it ("self" | "neighbor" | "pairwise").
    """
    self_refs = list(self_refs)
    neighbor_refs = list(neighbor_refs)
    if self_refs:
        ref = min(self_refs,
                  key=lambda r: (r.distance_to_new_sender, r.sender))
        k_seed, delta = seed_from_self_reference(ref, p_new, d_new,
                                                 link.target, radio)
        method = "self"
    elif neighbor_refs:
        ref = min(neighbor_refs,
                  key=lambda r: (r.metric, r.sender, r.receiver))
        k_seed, delta = seed_from_neighbor_reference(ref, p_new, link.target,
                                                     radio)
        method = "neighbor"
    else:
        k = pairwise_fallback_ratio(p_new, link.target, solo_interferers,
                                    radio)
        return LinkModel(sender=link.sender, receiver=link.receiver,
                         target=link.target, k=k,
                         ewma_weight=link.ewma_weight), "pairwise"
    seeded = LinkModel(sender=link.sender, receiver=link.receiver,
                       target=link.target, k=k_seed,
                       ewma_weight=link.ewma_weight)
    budget = InterferenceBudget(delta=delta, slope=1.0, y_smooth=link.target)
    res: AdaptResult = adapt_exclusion_ratio(seeded, budget, candidates)
    seeded.k = res.k
    return seeded, method


def is_transient(closing_speed: float, same_segment: bool,
                 threshold: float = TRANSIENT_CLOSING_SPEED) -> bool:
    """Short-lived link classification: fast mutual approach/separation or
    endpoints on different roads."""
    return abs(closing_speed) > threshold or not same_segment


@dataclass
class LinkEntry:
    """Registry record of an active link."""

    model: LinkModel
    created_slot: int
    last_seen_slot: int
    init_distance: float
    transient: bool = False
    method: str = "pairwise"


@dataclass(frozen=True)
class DormantEntry:
    k: float
    slot: int


class LinkRegistry:
    """Active-link table plus a short-term memory of dormant ratios."""

    def __init__(self, slot_duration_s: float,
                 retention_s: float = DORMANT_RETENTION_S,
                 gc_s: float = DORMANT_GC_S,
                 reinit_fraction: float = REINIT_DISTANCE_FRACTION):
        if slot_duration_s <= 0:
            raise ValueError("slot duration must be positive")
        self.slot_duration_s = slot_duration_s
        self.retention_slots = int(round(retention_s / slot_duration_s))
        self.gc_slots = int(round(gc_s / slot_duration_s))
        self.reinit_fraction = reinit_fraction
        self.active: dict[tuple[int, int], LinkEntry] = {}
        self.dormant: dict[tuple[int, int], DormantEntry] = {}

    def lookup(self, key: tuple[int, int]) -> LinkEntry | None:
        return self.active.get(key)

    def add(self, key: tuple[int, int], model: LinkModel, now_slot: int,
            init_distance: float, transient: bool = False,
            method: str = "pairwise") -> LinkEntry:
        entry = LinkEntry(model=model, created_slot=now_slot,
                          last_seen_slot=now_slot,
                          init_distance=init_distance, transient=transient,
                          method=method)
        self.active[key] = entry
        self.dormant.pop(key, None)
        return entry

    def recall_dormant(self, key: tuple[int, int],
                       now_slot: int) -> float | None:
        """Ratio of a recently dormant link, or None if it aged out."""
        entry = self.dormant.get(key)
        if entry is None:
            return None
        if now_slot - entry.slot < self.retention_slots:
            return entry.k
        return None

    def deactivate(self, key: tuple[int, int], now_slot: int) -> None:
        entry = self.active.pop(key, None)
        if entry is not None:
            self.dormant[key] = DormantEntry(k=entry.model.k, slot=now_slot)

    def needs_reinit(self, key: tuple[int, int], d_now: float) -> bool:
        """A transient link must re-bootstrap when its geometry has moved
        materially since the last initialization."""
        entry = self.active.get(key)
        if entry is None or not entry.transient:
            return False
        if entry.init_distance <= 0:
            return True
        return (abs(d_now - entry.init_distance) / entry.init_distance
                > self.reinit_fraction)

    def mark_reinit(self, key: tuple[int, int], model: LinkModel,
                    now_slot: int, d_now: float, method: str) -> None:
        entry = self.active[key]
        entry.model = model
        entry.init_distance = d_now
        entry.last_seen_slot = now_slot
        entry.method = method

    def gc(self, now_slot: int) -> None:
        dead = [k for k, e in self.dormant.items()
                if now_slot - e.slot >= self.gc_slots]
        for k in dead:
            del self.dormant[k]

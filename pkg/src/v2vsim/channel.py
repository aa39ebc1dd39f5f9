"""Wireless channel: path loss, shadowing, fading, SINR, and the radio model.

Large-scale loss is log-distance; shadowing is lognormal, drawn once per
unordered vehicle pair per coherence epoch from a counter-based RNG key so
that values are reproducible and independent of evaluation order.  Fast
fading (Rayleigh or Nakagami-m) multiplies the linear received power per
slot.  The radio model maps SINR to packet delivery probability through a
logistic curve in the dB domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_SHADOW_TAG = 0x5AD0
_FADE_TAG = 0xFADE


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_mw(dbm):
    return db_to_linear(dbm)


def mw_to_dbm(mw):
    return linear_to_db(mw)


@dataclass(frozen=True)
class ChannelParams:
    """Propagation model parameters.

    Args:
        ref_distance_m: Reference distance of the log-distance model.
        ref_loss_db: Path loss at the reference distance.
        exponent: Path-loss exponent (> 0).
        shadow_sigma_db: Lognormal shadowing standard deviation.
        fading: "none", "rayleigh", or "nakagami".
        nakagami_m: Shape parameter when fading == "nakagami".
        noise_floor_dbm: Receiver noise floor.
        coherence_slots: Shadowing re-draw period in slots (>= 1).
    """

    ref_distance_m: float = 1.0
    ref_loss_db: float = 47.0
    exponent: float = 2.5
    shadow_sigma_db: float = 2.0
    fading: str = "none"
    nakagami_m: float = 3.0
    noise_floor_dbm: float = -98.0
    coherence_slots: int = 4000

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadowing sigma must be non-negative")
        if self.coherence_slots < 1:
            raise ValueError("coherence_slots must be >= 1")
        if self.fading not in ("none", "rayleigh", "nakagami"):
            raise ValueError(f"unknown fading kind {self.fading!r}")
        if self.fading == "nakagami" and self.nakagami_m <= 0:
            raise ValueError("nakagami_m must be positive")

    @property
    def noise_floor_mw(self) -> float:
        return float(dbm_to_mw(self.noise_floor_dbm))


def path_loss_db(distance_m, params: ChannelParams):
    """Log-distance path loss; distances inside ref_distance_m are clamped."""
    d = np.maximum(np.asarray(distance_m, dtype=float), params.ref_distance_m)
    return params.ref_loss_db + 10.0 * params.exponent * np.log10(d / params.ref_distance_m)


def _pair_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i <= j else (j, i)


class ShadowField:
    """Per-pair lognormal shadowing, constant within a coherence epoch.

    Each unordered pair's value in each epoch is drawn from an RNG keyed by
    (seed, epoch, pair), so lookups are order-independent and reproducible.
    """

    def __init__(self, params: ChannelParams, seed: int):
        self.params = params
        self.seed = int(seed)
        self._cache: dict[tuple[int, int, int], float] = {}
        self._epoch_seen = -1

    def epoch_of(self, slot: int) -> int:
        return int(slot) // self.params.coherence_slots

    def shadow_db(self, i: int, j: int, slot: int) -> float:
        if self.params.shadow_sigma_db == 0.0:
            return 0.0
        epoch = self.epoch_of(slot)
        lo, hi = _pair_key(int(i), int(j))
        key = (epoch, lo, hi)
        val = self._cache.get(key)
        if val is None:
            if epoch != self._epoch_seen:
                # keep at most two epochs of draws around transitions
                self._cache = {k: v for k, v in self._cache.items()
                               if k[0] >= epoch - 1}
                self._epoch_seen = epoch
            rng = np.random.default_rng(
                (self.seed, _SHADOW_TAG, epoch, lo, hi))
            val = float(rng.standard_normal()) * self.params.shadow_sigma_db
            self._cache[key] = val
        return val

    def matrix_db(self, ids: np.ndarray, slot: int) -> np.ndarray:
        """Symmetric (n, n) shadowing matrix for the given vehicle ids."""
        n = len(ids)
        out = np.zeros((n, n))
        if self.params.shadow_sigma_db == 0.0:
            return out
        for a in range(n):
            for b in range(a + 1, n):
                v = self.shadow_db(int(ids[a]), int(ids[b]), slot)
                out[a, b] = out[b, a] = v
        return out


def fading_gain(params: ChannelParams, rng: np.random.Generator, size=None):
    """Linear power multiplier of the fast-fading process (mean 1)."""
    if params.fading == "none":
        return 1.0 if size is None else np.ones(size)
    if params.fading == "rayleigh":
        return rng.exponential(1.0, size=size)
    return rng.gamma(params.nakagami_m, 1.0 / params.nakagami_m, size=size)


def fading_rng(seed: int, slot: int) -> np.random.Generator:
    """Per-slot fading stream; kept separate so schedules cannot skew it."""
    return np.random.default_rng((int(seed), _FADE_TAG, int(slot)))


def received_power_mw(tx_power_dbm: float, distance_m: float,
                      params: ChannelParams, *, pair: tuple[int, int] = (0, 1),
                      slot: int = 0, seed: int = 0,
                      shadow: ShadowField | None = None,
                      fade: float | None = None) -> float:
    """Received power of one transmission in mW.

    Deterministic per (pair, slot epoch, seed): the shadowing draw comes from
    the counter-based field, the optional fading multiplier from the per-slot
    stream (pass `fade` to reuse a draw).
    """
    shadow = shadow or ShadowField(params, seed)
    pr_dbm = tx_power_dbm - float(path_loss_db(distance_m, params))
    pr_dbm += shadow.shadow_db(pair[0], pair[1], slot)
    p = float(dbm_to_mw(pr_dbm))
    if params.fading != "none":
        if fade is None:
            lo, hi = _pair_key(*pair)
            fade = float(fading_gain(params, np.random.default_rng(
                (int(seed), _FADE_TAG, int(slot), lo, hi))))
        p *= fade
    return p


def slot_sinr(signal_mw: float, interference_mw, noise_mw: float) -> float:
    """Linear SINR under cumulative interference."""
    total_i = float(np.sum(interference_mw)) if np.ndim(interference_mw) else float(interference_mw)
    return float(signal_mw) / (noise_mw + total_i)


@dataclass(frozen=True)
class RadioModel:
    """Packet parameters and the SINR -> delivery-probability curve."""

    packet_bytes: int = 1500
    bitrate_bps: float = 6.0e6
    midpoint_db: float = 5.0
    slope_db: float = 1.0

    def __post_init__(self):
        if self.packet_bytes <= 0 or self.bitrate_bps <= 0:
            raise ValueError("packet_bytes and bitrate_bps must be positive")
        if self.slope_db <= 0:
            raise ValueError("slope_db must be positive (strictly increasing curve)")

    def pdr(self, sinr_linear):
        """Delivery probability; 0 at non-positive SINR, monotone, < 1."""
        s = np.asarray(sinr_linear, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        with np.errstate(over="ignore"):
            sdb = 10.0 * np.log10(s[pos])
            out[pos] = 1.0 / (1.0 + np.exp(-(sdb - self.midpoint_db) / self.slope_db))
        return float(out) if np.ndim(sinr_linear) == 0 else out

    def sinr_for(self, pdr: float) -> float:
        """Inverse of the curve; defined on (0, 1) only."""
        if not 0.0 < pdr < 1.0:
            raise ValueError("pdr must lie strictly inside (0, 1)")
        sdb = self.midpoint_db + self.slope_db * math.log(pdr / (1.0 - pdr))
        return 10.0 ** (sdb / 10.0)

    @property
    def airtime_s(self) -> float:
        return self.packet_bytes * 8.0 / self.bitrate_bps


def bernoulli_delivery(sinr_linear: float, radio: RadioModel,
                       rng: np.random.Generator) -> bool:
    """Sample one reception outcome."""
    return bool(rng.random() < radio.pdr(sinr_linear))


def calibrate_tx_power_dbm(params: ChannelParams, radio: RadioModel,
                           range_m: float, target_pdr: float,
                           margin_db: float = 6.0) -> float:
    """Transmit power making the no-interference SNR at `range_m` sit
    `margin_db` above the SINR needed for `target_pdr`."""
    need_db = float(linear_to_db(radio.sinr_for(target_pdr)))
    return params.noise_floor_dbm + need_db + margin_db + float(
        path_loss_db(range_m, params))


@dataclass(frozen=True)
class PowerEstimate:
    """Receiver-side EWMA state for one interference source.

    `power_mw` tracks the sampled received control-packet power; `beta` the
    per-slot transmit probability of the source, fed from observed activity
    fractions.  Both smooth with the same weight.
    """

    power_mw: float = 0.0
    beta: float = 0.0
    n_updates: int = 0
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.power_mw < 0.0:
            raise ValueError("power must be non-negative")


def update_power_estimate(est: PowerEstimate, power_mw: float | None,
                          tx_fraction: float | None) -> PowerEstimate:
    """Fold one control-round observation into the estimate.

    Either part may be absent (None).  The first observation of each part
    initializes it directly; later ones blend with weight alpha.
    """
    p, b, n = est.power_mw, est.beta, est.n_updates
    if power_mw is not None:
        if power_mw < 0:
            raise ValueError("negative power sample")
        p = power_mw if n == 0 else (1.0 - est.alpha) * p + est.alpha * power_mw
    if tx_fraction is not None:
        if not 0.0 <= tx_fraction <= 1.0:
            raise ValueError("tx_fraction must lie in [0, 1]")
        b = tx_fraction if n == 0 else (1.0 - est.alpha) * b + est.alpha * tx_fraction
    return replace(est, power_mw=p, beta=b, n_updates=n + 1)

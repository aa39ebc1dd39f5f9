"""Model-based tracking of neighbor vehicles between location updates.

Vehicles learn each other's locations only at control-round granularity, so
between updates each neighbor is tracked with an unscented Kalman filter
whose process model is the car-following dynamics: the state couples the
neighbor's arclength position, speed, and bumper gap with its two dominant
driving parameters (desired speed and time gap), which evolve as random
walks so the filter can learn them online.  Measurements are shared
locations projected to arclength.  A shared bank propagates all tracks in
one vectorized pass per step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mobility import IdmParams, NO_LEAD_GAP_M, idm_accel_acc

#: State component indices.
POS, VEL, GAP, V0, TGAP = range(5)
STATE_DIM = 5

_MIN_GAP = 0.1
_MIN_V0 = 0.1
_JITTER = 1e-9
_REPAIR_TRIES = 3


@dataclass(frozen=True)
class UkfParams:
    """Sigma-point and noise configuration for the tracker.

    Process noise is expressed as variance growth per second so the filter
    behaves consistently across step sizes; the two driving-parameter
    components get random-walk rates instead of dynamics.
    """

    # alpha = 1 keeps every sigma weight nonnegative; smaller values put a
    # large negative weight on the center point, which amplifies the gap
    # clamp in the process model into filter divergence
    alpha: float = 1.0
    kappa: float = 0.0
    beta: float = 2.0
    q_pos: float = 0.05
    q_speed: float = 0.5
    q_gap: float = 1.0
    walk_desired_speed: float = 0.05
    walk_time_gap: float = 0.01
    meas_sigma_m: float = 4.0
    gate_sigmas: float = 6.0
    prior_speed_sigma: float = 5.0
    prior_gap_sigma: float = 20.0
    prior_desired_speed_sigma: float = 8.0
    prior_time_gap_sigma: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.kappa < 0 or self.beta < 0:
            raise ValueError("kappa and beta must be nonnegative")
        for name in ("q_pos", "q_speed", "q_gap", "walk_desired_speed",
                     "walk_time_gap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.meas_sigma_m <= 0 or self.gate_sigmas <= 0:
            raise ValueError("meas_sigma_m and gate_sigmas must be positive")

    def process_noise(self, dt: float) -> np.ndarray:
        return np.diag([self.q_pos, self.q_speed, self.q_gap,
                        self.walk_desired_speed, self.walk_time_gap]) * dt

    def prior_cov(self) -> np.ndarray:
        return np.diag([self.meas_sigma_m, self.prior_speed_sigma,
                        self.prior_gap_sigma, self.prior_desired_speed_sigma,
                        self.prior_time_gap_sigma]) ** 2


@dataclass
class TrackState:
    """One tracked neighbor: mean, covariance, and road placement."""

    vehicle: int
    segment: int
    mean: np.ndarray
    cov: np.ndarray
    slot: int = 0

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).reshape(STATE_DIM)
        self.cov = np.asarray(self.cov, dtype=float).reshape(STATE_DIM,
                                                             STATE_DIM)


def _weights(p: UkfParams) -> tuple[np.ndarray, np.ndarray, float]:
    n = STATE_DIM
    lam = p.alpha ** 2 * (n + p.kappa) - n
    scale = n + lam
    wm = np.full(2 * n + 1, 1.0 / (2.0 * scale))
    wm[0] = lam / scale
    wc = wm.copy()
    wc[0] += 1.0 - p.alpha ** 2 + p.beta
    return wm, wc, scale


def _repair(covs: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Symmetrize and, if needed, jitter covariances back to positive
    definiteness; a track that stays broken is reset to the prior."""
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    jitter = _JITTER
    eye = np.eye(STATE_DIM)
    for _ in range(_REPAIR_TRIES):
        try:
            np.linalg.cholesky(covs)
            return covs
        except np.linalg.LinAlgError:
            pass
        if covs.ndim == 2:
            bad = np.array(True)
        else:
            bad = np.zeros(len(covs), dtype=bool)
            for i, c in enumerate(covs):
                try:
                    np.linalg.cholesky(c)
                except np.linalg.LinAlgError:
                    bad[i] = True
        covs = covs + np.where(bad[..., None, None], jitter, 0.0) * eye
        jitter *= 100.0
    try:
        np.linalg.cholesky(covs)
        return covs
    except np.linalg.LinAlgError:
        if covs.ndim == 2:
            return prior.copy()
        out = covs.copy()
        for i, c in enumerate(out):
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                out[i] = prior
        return out


def _sigma_points(means: np.ndarray, covs: np.ndarray,
                  scale: float) -> np.ndarray:
    """Batched symmetric sigma points: (m, 2n+1, n)."""
    chol = np.linalg.cholesky(scale * covs)
    n = STATE_DIM
    pts = np.repeat(means[:, None, :], 2 * n + 1, axis=1)
    offsets = np.swapaxes(chol, -1, -2)
    pts[:, 1:n + 1, :] += offsets
    pts[:, n + 1:, :] -= offsets
    return pts


def _process(pts: np.ndarray, dt: float, lead_speed: np.ndarray,
             defaults: IdmParams) -> np.ndarray:
    """Car-following step applied to every sigma point.

    The lead is held at constant speed over the step; driving-parameter
    components pass through unchanged (their diffusion lives in the process
    noise).  Inputs are clamped to the model's physical domain.
    """
    v = np.maximum(pts[..., VEL], 0.0)
    gap = np.maximum(pts[..., GAP], _MIN_GAP)
    params = {
        "v0": np.maximum(pts[..., V0], _MIN_V0),
        "time_gap": np.maximum(pts[..., TGAP], 0.0),
        "min_gap": defaults.min_gap,
        "delta": defaults.delta,
        "accel_max": defaults.accel_max,
        "decel_comf": defaults.decel_comf,
        "blend": defaults.blend,
    }
    lv = lead_speed[..., None]
    accel = idm_accel_acc(gap, v, lv, 0.0, params)
    v_new = np.maximum(v + accel * dt, 0.0)
    out = pts.copy()
    out[..., POS] = pts[..., POS] + v_new * dt
    out[..., VEL] = v_new
    out[..., GAP] = gap + (lv - v_new) * dt
    return out


def predict_arrays(means: np.ndarray, covs: np.ndarray, dt: float,
                   lead_speed: np.ndarray, ukf: UkfParams,
                   defaults: IdmParams) -> tuple[np.ndarray, np.ndarray]:
    """Batched unscented prediction over (m, 5) means and (m, 5, 5) covs."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    wm, wc, scale = _weights(ukf)
    covs = _repair(covs, ukf.prior_cov())
    pts = _sigma_points(means, covs, scale)
    fpts = _process(pts, dt, lead_speed, defaults)
    mean = np.einsum("k,mkn->mn", wm, fpts)
    dev = fpts - mean[:, None, :]
    cov = np.einsum("k,mki,mkj->mij", wc, dev, dev) + ukf.process_noise(dt)
    cov = _repair(cov, ukf.prior_cov())
    mean[:, VEL] = np.maximum(mean[:, VEL], 0.0)
    return mean, cov


def update_arrays(mean: np.ndarray, cov: np.ndarray, measured_pos: float,
                  ukf: UkfParams) -> tuple[np.ndarray, np.ndarray, bool]:
    """Unscented position-measurement update of a single track.

    Returns the posterior and whether the measurement passed the innovation
    gate; a gated-out measurement leaves the track untouched.
    """
    if not np.isfinite(measured_pos):
        raise ValueError("measurement must be finite")
    wm, wc, scale = _weights(ukf)
    cov = _repair(cov, ukf.prior_cov())
    pts = _sigma_points(mean[None, :], cov[None, :, :], scale)[0]
    zs = pts[:, POS]
    zhat = wm @ zs
    dz = zs - zhat
    s = wc @ (dz * dz) + ukf.meas_sigma_m ** 2
    innov = measured_pos - zhat
    if innov * innov > (ukf.gate_sigmas ** 2) * s:
        return mean, cov, False
    pxz = np.einsum("k,kn->n", wc, (pts - mean) * dz[:, None])
    gain = pxz / s
    new_mean = mean + gain * innov
    new_mean[VEL] = max(new_mean[VEL], 0.0)
    new_cov = _repair(cov - s * np.outer(gain, gain), ukf.prior_cov())
    return new_mean, new_cov, True


def ukf_predict(track: TrackState, dt: float, ukf: UkfParams,
                defaults: IdmParams,
                lead_speed: float | None = None) -> TrackState:
    """Advance one track by dt; `lead_speed=None` means unconstrained (the
    track follows its own speed with an effectively infinite gap)."""
    lv = track.mean[VEL] if lead_speed is None else lead_speed
    mean, cov = predict_arrays(track.mean[None, :], track.cov[None, :, :],
                               dt, np.asarray([lv]), ukf, defaults)
    return replace(track, mean=mean[0], cov=cov[0])


def ukf_update(track: TrackState, measured_pos: float,
               ukf: UkfParams) -> tuple[TrackState, bool]:
    mean, cov, ok = update_arrays(track.mean, track.cov, measured_pos, ukf)
    return replace(track, mean=mean, cov=cov), ok


class TrackerBank:
    """Shared table of neighbor tracks, one per tracked vehicle.

    The control plane delivers the same location updates to everyone, so a
    single bank serves all observers.  Lead relationships couple tracks
    only through the previous step's speed means, keeping the batched
    prediction order-independent.
    """

    def __init__(self, ukf: UkfParams | None = None,
                 defaults: IdmParams | None = None):
        self.ukf = ukf or UkfParams()
        self.defaults = defaults or IdmParams(v0=30.0)
        self._ids: list[int] = []
        self._index: dict[int, int] = {}
        self._segment: dict[int, int] = {}
        self._lead: dict[int, int | None] = {}
        self._means = np.zeros((0, STATE_DIM))
        self._covs = np.zeros((0, STATE_DIM, STATE_DIM))

    def __contains__(self, vehicle: int) -> bool:
        return vehicle in self._index

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(self._ids)

    def start_track(self, vehicle: int, segment: int, position_m: float,
                    speed_mps: float = 0.0, gap_m: float = NO_LEAD_GAP_M,
                    desired_speed_hint: float | None = None,
                    time_gap_hint: float | None = None) -> None:
        v0 = self.defaults.v0 if desired_speed_hint is None else desired_speed_hint
        tg = self.defaults.time_gap if time_gap_hint is None else time_gap_hint
        mean = np.array([position_m, speed_mps, gap_m, v0, tg])
        if vehicle in self._index:
            i = self._index[vehicle]
            self._means[i] = mean
            self._covs[i] = self.ukf.prior_cov()
        else:
            self._index[vehicle] = len(self._ids)
            self._ids.append(vehicle)
            self._means = np.vstack([self._means, mean[None, :]])
            self._covs = np.concatenate(
                [self._covs, self.ukf.prior_cov()[None, :, :]])
            self._lead[vehicle] = None
        self._segment[vehicle] = segment

    def drop(self, vehicle: int) -> None:
        i = self._index.pop(vehicle)
        last = len(self._ids) - 1
        if i != last:
            moved = self._ids[last]
            self._ids[i] = moved
            self._index[moved] = i
            self._means[i] = self._means[last]
            self._covs[i] = self._covs[last]
        self._ids.pop()
        self._means = self._means[:last]
        self._covs = self._covs[:last]
        self._segment.pop(vehicle, None)
        self._lead.pop(vehicle, None)
        for v, lead in self._lead.items():
            if lead == vehicle:
                self._lead[v] = None

    def set_lead(self, vehicle: int, lead: int | None) -> None:
        if lead is not None and lead not in self._index:
            lead = None
        self._lead[vehicle] = lead

    def predict_all(self, dt: float) -> None:
        if not self._ids:
            return
        lead_v = self._means[:, VEL].copy()
        for v, lead in self._lead.items():
            if lead is not None:
                lead_v[self._index[v]] = self._means[self._index[lead], VEL]
        self._means, self._covs = predict_arrays(
            self._means, self._covs, dt, lead_v, self.ukf, self.defaults)

    def update(self, vehicle: int, measured_position_m: float,
               segment: int | None = None) -> bool:
        i = self._index[vehicle]
        if segment is not None and segment != self._segment[vehicle]:
            # road change invalidates the arclength coordinate: hard refresh
            self.refresh(vehicle, segment, measured_position_m)
            return True
        mean, cov, ok = update_arrays(self._means[i], self._covs[i],
                                      measured_position_m, self.ukf)
        if ok:
            self._means[i] = mean
            self._covs[i] = cov
        return ok

    def refresh(self, vehicle: int, segment: int, position_m: float,
                speed_mps: float | None = None,
                gap_m: float | None = None) -> None:
        """Out-of-cycle reset after a lane change or turn: the covariance
        returns to the measurement prior; unspecified components keep their
        means."""
        i = self._index[vehicle]
        self._means[i, POS] = position_m
        if speed_mps is not None:
            self._means[i, VEL] = speed_mps
        if gap_m is not None:
            self._means[i, GAP] = gap_m
        self._covs[i] = self.ukf.prior_cov()
        self._segment[vehicle] = segment

    def set_gap(self, vehicle: int, gap_m: float,
                variance: float | None = None) -> None:
        i = self._index[vehicle]
        self._means[i, GAP] = gap_m
        if variance is not None:
            self._covs[i, GAP, :] = 0.0
            self._covs[i, :, GAP] = 0.0
            self._covs[i, GAP, GAP] = variance

    def segment_of(self, vehicle: int) -> int:
        return self._segment[vehicle]

    def position(self, vehicle: int) -> float:
        return float(self._means[self._index[vehicle], POS])

    def speed(self, vehicle: int) -> float:
        return float(self._means[self._index[vehicle], VEL])

    def state(self, vehicle: int) -> TrackState:
        i = self._index[vehicle]
        return TrackState(vehicle=vehicle, segment=self._segment[vehicle],
                          mean=self._means[i].copy(),
                          cov=self._covs[i].copy())

    def positions(self) -> tuple[tuple[int, ...], np.ndarray]:
        return tuple(self._ids), self._means[:, POS].copy()

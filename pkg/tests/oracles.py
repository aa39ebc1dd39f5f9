"""Independent scalar reference implementations used to freeze expected values.

These are deliberately written as straight-line transliterations of the
closed forms, separate from the package's vectorized code, so the test suite
compares two independent derivations.  Keep them boring.
"""

from __future__ import annotations

import math


# -- car-following closed forms -------------------------------------------

def ref_desired_gap(v, v_lead, p):
    dyn = v * p.time_gap + v * (v - v_lead) / (2.0 * math.sqrt(p.accel_max * p.decel_comf))
    return p.min_gap + max(0.0, dyn)


def ref_accel_free(v, p):
    if v <= p.v0:
        return p.accel_max * (1.0 - (v / p.v0) ** p.delta)
    return -p.decel_comf * (1.0 - (p.v0 / v) ** (p.accel_max * p.delta / p.decel_comf))


def ref_accel_iidm(s, v, v_lead, p):
    if s <= 0:
        raise ValueError("collision state")
    z = ref_desired_gap(v, v_lead, p) / s
    af = ref_accel_free(v, p)
    if v <= p.v0:
        if z >= 1.0:
            return p.accel_max * (1.0 - z * z)
        return af * (1.0 - z ** (2.0 * p.accel_max / af)) if af > 0 else 0.0
    if z >= 1.0:
        return af + p.accel_max * (1.0 - z * z)
    return af


def ref_accel_cah(s, v, v_lead, a_lead, p):
    if s <= 0:
        raise ValueError("collision state")
    eff = min(a_lead, p.accel_max)
    if v_lead * (v - v_lead) <= -2.0 * s * eff:
        den = v_lead * v_lead - 2.0 * s * eff
        return v * v * eff / den if den != 0 else -v * v / (2.0 * s)
    return eff - ((v - v_lead) ** 2) * (1.0 if v >= v_lead else 0.0) / (2.0 * s)


def ref_accel_acc(s, v, v_lead, a_lead, p):
    ai = ref_accel_iidm(s, v, v_lead, p)
    ac = ref_accel_cah(s, v, v_lead, a_lead, p)
    if ai >= ac:
        return ai
    return (1.0 - p.blend) * ai + p.blend * (
        ac + p.decel_comf * math.tanh((ai - ac) / p.decel_comf))


# -- feedback-controller closed form --------------------------------------

def ref_budget(y_meas, y_smooth_prev, target, c, f_inv, drift, h=1e-6, clip=1e-4):
    """Reference interference-budget arithmetic (the controller's Eq.)."""
    y_meas = min(max(y_meas, clip), 1.0 - clip)
    y_s = c * y_smooth_prev + (1.0 - c) * y_meas
    num = (1.0 + c) * y_s - c * y_smooth_prev - target
    if abs(target - y_meas) < 1e-9:
        slope = 2.0 * h / (f_inv(target + h) - f_inv(target - h))
    else:
        slope = (target - y_meas) / (f_inv(target) - f_inv(y_meas))
    return num / ((1.0 - c) * slope) - drift, y_s


def ref_budget_power(delta, y_meas, target, snr_linear, f_inv, clip=1e-4):
    """Reference SINR-budget -> interference-power conversion.

    Maps the reliability-domain budget onto the change of tolerable
    interference at a link whose interference-free SNR is `snr_linear`,
    clamping the post-change operating point between the measured and the
    target SINR (jump-to-target bound).  Units follow snr_linear (noise=1).
    """
    y = min(max(y_meas, clip), 1.0 - clip)
    s_now = f_inv(y)
    s_tgt = f_inv(target)
    s_next = s_now - delta
    s_next = min(max(s_next, min(s_now, s_tgt)), max(s_now, s_tgt))
    i_now = max(snr_linear / s_now - 1.0, 0.0)
    i_next = max(snr_linear / s_next - 1.0, 0.0)
    return i_next - i_now


# -- radio model ----------------------------------------------------------

def ref_pdr(sinr_linear, midpoint_db, slope_db):
    if sinr_linear <= 0:
        return 0.0
    sinr_db = 10.0 * math.log10(sinr_linear)
    return 1.0 / (1.0 + math.exp(-(sinr_db - midpoint_db) / slope_db))


def ref_sinr_for(pdr, midpoint_db, slope_db):
    if not 0.0 < pdr < 1.0:
        raise ValueError("pdr outside (0,1)")
    sinr_db = midpoint_db + slope_db * math.log(pdr / (1.0 - pdr))
    return 10.0 ** (sinr_db / 10.0)

"""Exclusion-region model tests: membership rule, reliability EWMA, the
interference-budget controller, and region adaptation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from v2vsim.channel import PowerEstimate, RadioModel, update_power_estimate
from v2vsim.exclusion import (
    InterferenceBudget,
    InterferenceCandidate,
    LinkModel,
    adapt_exclusion_ratio,
    budget_to_interference_power,
    can_transmit_concurrently,
    compute_interference_budget,
    expected_interference,
    region_members,
    update_smoothed_reliability,
)

RADIO = RadioModel()

FROZEN = {
    "budget_a_delta": -1.144313961219995,
    "budget_a_smooth": 0.8100000000000002,
    "budget_b_delta": 1.3289101087338935,
    "slope_at_target": 0.07452540810969815,
    "power_shrink_small": 0.38193523539049234,
    "power_grow_small": -0.5226467218045183,
    "power_shrink_clipped": 1.5831216275914954,
    "power_grow_clipped": -1.7864045371688668,
    "power_y_one_clip": 0.0548015358975642,
}


def cand(metric, vid, interference=1.0):
    return InterferenceCandidate(metric=metric, vehicle=vid,
                                 interference=interference)


def link(k=1.0, target=0.9, c=0.2):
    return LinkModel(sender=0, receiver=1, target=target, k=k, ewma_weight=c)


# -- concurrency rule ------------------------------------------------------


def test_concurrency_strictly_outside():
    assert can_transmit_concurrently(100.0, 30.0, 3.0) is True


def test_concurrency_boundary_is_member():
    """A candidate exactly on the region boundary must stay silent."""
    assert can_transmit_concurrently(90.0, 30.0, 3.0) is False


def test_concurrency_zero_ratio_allows_everyone():
    assert can_transmit_concurrently(0.5, 30.0, 0.0) is True


def test_region_membership_closed_boundary():
    cands = [cand(0.8, 1), cand(1.0, 2), cand(1.2, 3)]
    assert [c.vehicle for c in region_members(cands, 1.0)] == [1, 2]


# -- reliability EWMA ------------------------------------------------------


def test_ewma_first_sample_seeds():
    ln = link()
    update_smoothed_reliability(ln, 0.7)
    assert ln.y_smooth == pytest.approx(0.7) and ln.y_valid


def test_ewma_blends_history():
    ln = link(c=0.2)
    update_smoothed_reliability(ln, 0.5)
    update_smoothed_reliability(ln, 1.0)
    assert ln.y_smooth == pytest.approx(0.2 * 0.5 + 0.8 * 1.0, abs=1e-12)


def test_convergence_needs_two_consecutive_good_windows():
    ln = link()
    update_smoothed_reliability(ln, 0.95)
    assert not ln.converged
    update_smoothed_reliability(ln, 0.5)
    update_smoothed_reliability(ln, 0.92)
    assert not ln.converged, "streak was reset by the bad window"
    update_smoothed_reliability(ln, 0.93)
    assert ln.converged


# -- interference budget ---------------------------------------------------


def test_budget_matches_scripted_oracle_below_target():
    ln = link(c=0.2)
    ln.y_smooth, ln.y_valid = 0.85, True
    b = compute_interference_budget(ln, 0.8, RADIO, drift=0.05)
    assert b.delta == pytest.approx(FROZEN["budget_a_delta"], abs=1e-9)
    assert b.y_smooth == pytest.approx(FROZEN["budget_a_smooth"], abs=1e-12)


def test_budget_matches_scripted_oracle_above_target():
    ln = link(c=0.0)
    ln.y_smooth, ln.y_valid = 0.96, True
    b = compute_interference_budget(ln, 0.96, RADIO)
    assert b.delta == pytest.approx(FROZEN["budget_b_delta"], abs=1e-9)


def test_budget_zero_at_target_with_settled_history():
    ln = link(c=0.2)
    ln.y_smooth, ln.y_valid = 0.9, True
    b = compute_interference_budget(ln, 0.9, RADIO)
    assert b.delta == pytest.approx(0.0, abs=1e-9)
    assert b.slope == pytest.approx(FROZEN["slope_at_target"], rel=1e-9)


def test_budget_sign_structure():
    """Below target -> negative budget (grow); above -> positive (shrink)."""
    for y, sign in [(0.5, -1), (0.8, -1), (0.95, 1), (0.999, 1)]:
        ln = link(c=0.2)
        b = compute_interference_budget(ln, y, RADIO)
        assert np.sign(b.delta) == sign, f"wrong sign at y={y}"


def test_budget_continuous_through_target():
    """The secant/difference-quotient seam at y == target does not jump."""
    ln = link(c=0.0)
    ln.y_smooth, ln.y_valid = 0.9, True
    lo = compute_interference_budget(ln, 0.9 - 1e-7, RADIO).delta
    at = compute_interference_budget(ln, 0.9, RADIO).delta
    hi = compute_interference_budget(ln, 0.9 + 1e-7, RADIO).delta
    assert lo < at < hi
    assert abs(hi - lo) < 1e-4


def test_budget_matches_oracle_on_grid():
    """Eq-for-eq agreement with the reference arithmetic to 1e-9."""
    for y_prev in (0.5, 0.85, 0.9, 0.97):
        for y in (0.3, 0.7, 0.88, 0.9, 0.94, 0.999):
            for c in (0.0, 0.2, 0.5):
                ln = link(c=c)
                ln.y_smooth, ln.y_valid = y_prev, True
                got = compute_interference_budget(ln, y, RADIO, drift=0.01)
                want, ys = oracles.ref_budget(y, y_prev, 0.9, c,
                                              RADIO.sinr_for, 0.01)
                assert got.delta == pytest.approx(want, abs=1e-9)
                assert got.y_smooth == pytest.approx(ys, abs=1e-12)


def test_expected_interference_scales_by_activity():
    est = update_power_estimate(PowerEstimate(), 4.0, 0.25)
    assert expected_interference(est, noise_mw=2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        expected_interference(est, noise_mw=0.0)


# -- budget -> tolerable power conversion ----------------------------------


def test_power_budget_frozen_values():
    grid = [
        ("power_shrink_small", 0.8, 0.98),
        ("power_grow_small", -0.5, 0.85),
        ("power_shrink_clipped", 50.0, 0.98),
        ("power_grow_clipped", -50.0, 0.7),
        ("power_y_one_clip", 2.0, 1.0),
    ]
    for key, delta, y in grid:
        got = budget_to_interference_power(delta, y, 0.9, 25.7, RADIO)
        assert got == pytest.approx(FROZEN[key], abs=1e-9), key


def test_power_budget_matches_oracle_on_grid():
    f_inv = lambda y: oracles.ref_sinr_for(y, RADIO.midpoint_db,
                                           RADIO.slope_db)
    for delta in (-30.0, -2.0, -0.1, 0.0, 0.1, 0.8, 30.0):
        for y in (0.0, 0.2, 0.7, 0.9, 0.98, 1.0):
            for snr in (2.0, 25.7, 400.0):
                got = budget_to_interference_power(delta, y, 0.9, snr, RADIO)
                want = oracles.ref_budget_power(delta, y, 0.9, snr, f_inv)
                assert got == pytest.approx(want, abs=1e-9), (delta, y, snr)


def test_power_budget_sign_follows_delta():
    """Shrink budgets never lower and grow budgets never raise the
    tolerable interference."""
    for delta in (0.05, 0.5, 5.0):
        assert budget_to_interference_power(delta, 0.98, 0.9, 25.7,
                                            RADIO) >= 0.0
        assert budget_to_interference_power(-delta, 0.7, 0.9, 25.7,
                                            RADIO) <= 0.0
    assert budget_to_interference_power(0.0, 0.98, 0.9, 25.7, RADIO) == 0.0


def test_power_budget_saturates_at_target_jump():
    """Any oversized budget converts to exactly the jump-to-target power;
    a larger budget buys nothing more in one window."""
    jump = budget_to_interference_power(50.0, 0.98, 0.9, 25.7, RADIO)
    assert jump == pytest.approx(FROZEN["power_shrink_clipped"], abs=1e-9)
    assert budget_to_interference_power(1e6, 0.98, 0.9, 25.7, RADIO) \
        == pytest.approx(jump, abs=1e-12)
    down = budget_to_interference_power(-50.0, 0.7, 0.9, 25.7, RADIO)
    assert budget_to_interference_power(-1e6, 0.7, 0.9, 25.7, RADIO) \
        == pytest.approx(down, abs=1e-12)


def test_power_budget_wrong_direction_is_nulled():
    """A shrink budget on a failing link (or grow on a passing one) would
    push the operating point away from the target; the clamp zeroes it."""
    assert budget_to_interference_power(0.8, 0.7, 0.9, 25.7, RADIO) == 0.0
    assert budget_to_interference_power(-0.8, 0.98, 0.9, 25.7, RADIO) == 0.0


def test_power_budget_rejects_nonpositive_snr():
    with pytest.raises(ValueError):
        budget_to_interference_power(0.5, 0.95, 0.9, 0.0, RADIO)
    with pytest.raises(ValueError):
        budget_to_interference_power(0.5, 0.95, 0.9, -3.0, RADIO)


# -- adaptation ------------------------------------------------------------


def test_adapt_zero_budget_keeps_ratio():
    res = adapt_exclusion_ratio(link(k=1.5), InterferenceBudget(0.0, 1.0, 0.9),
                                [cand(1.0, 1), cand(2.0, 2)])
    assert res.k == 1.5 and not res.added and not res.removed


def test_grow_admits_nearest_first_until_budget_met():
    """Region must grow by |delta|: candidates at ratios 1.6 (I=3) and
    2.0 (I=2.5) are both needed for a 5-unit deficit; the last one admitted
    defines the boundary."""
    cands = [cand(2.0, 7, 2.5), cand(1.6, 3, 3.0)]
    res = adapt_exclusion_ratio(link(k=1.0), InterferenceBudget(-5.0, 1.0, 0.8),
                                cands)
    assert res.added == (3, 7)
    assert res.k == pytest.approx(2.0)
    assert not res.saturated


def test_grow_stops_at_first_sufficient_candidate():
    cands = [cand(1.2, 1, 6.0), cand(1.4, 2, 1.0)]
    res = adapt_exclusion_ratio(link(k=1.0), InterferenceBudget(-5.0, 1.0, 0.8),
                                cands)
    assert res.added == (1,) and res.k == pytest.approx(1.2)


def test_grow_saturates_when_candidates_run_out():
    cands = [cand(1.5, 1, 0.5), cand(2.5, 2, 0.5)]
    res = adapt_exclusion_ratio(link(k=1.0), InterferenceBudget(-9.0, 1.0, 0.5),
                                cands)
    assert res.saturated and res.k == pytest.approx(2.5)
    assert res.added == (1, 2)


def test_shrink_releases_farthest_first_within_budget():
    """Members at ratios 3.0/2.5/2.0, 2 units each, budget 5: two go, the
    third-farthest survivor becomes the boundary."""
    cands = [cand(3.0, 1, 2.0), cand(2.5, 2, 2.0), cand(2.0, 3, 2.0),
             cand(0.5, 4, 9.0)]
    res = adapt_exclusion_ratio(link(k=3.5), InterferenceBudget(5.0, 1.0, 0.97),
                                cands)
    assert res.removed == (1, 2)
    assert res.k == pytest.approx(2.0)


def test_shrink_can_empty_the_region():
    cands = [cand(1.5, 1, 1.0)]
    res = adapt_exclusion_ratio(link(k=2.0), InterferenceBudget(5.0, 1.0, 0.99),
                                cands)
    assert res.removed == (1,) and res.k == 0.0


def test_shrink_on_empty_region_keeps_ratio():
    res = adapt_exclusion_ratio(link(k=0.7), InterferenceBudget(5.0, 1.0, 0.99),
                                [cand(2.0, 1, 1.0)])  # only non-members
    assert res.k == 0.7 and not res.removed


def test_shrink_snaps_to_farthest_member_when_nothing_removable():
    """With no removable member the boundary tightens onto the farthest
    actual member."""
    cands = [cand(2.4, 1, 9.0), cand(1.0, 2, 9.0)]
    res = adapt_exclusion_ratio(link(k=3.0), InterferenceBudget(1.0, 1.0, 0.95),
                                cands)
    assert res.removed == ()
    assert res.k == pytest.approx(2.4)


def test_tie_breaks_toward_lower_vehicle_id():
    cands = [cand(1.5, 9, 1.0), cand(1.5, 2, 1.0)]
    res = adapt_exclusion_ratio(link(k=1.0), InterferenceBudget(-1.0, 1.0, 0.8),
                                cands)
    assert res.added[0] == 2


@given(
    metrics=st.lists(st.floats(0.1, 5.0), min_size=1, max_size=20, unique=True),
    k=st.floats(0.0, 5.0),
    delta=st.floats(-20.0, 20.0),
)
@settings(max_examples=300, deadline=None)
def test_adapt_membership_algebra(metrics, k, delta):
    """After adaptation the member set under the new ratio equals the old
    members plus additions (grow) or minus removals (shrink)."""
    rng = np.random.default_rng(0)
    cands = [cand(m, i, float(rng.uniform(0.1, 3.0)))
             for i, m in enumerate(metrics)]
    before = {c.vehicle for c in region_members(cands, k)}
    res = adapt_exclusion_ratio(link(k=k), InterferenceBudget(delta, 1.0, 0.9),
                                cands)
    after = {c.vehicle for c in region_members(cands, res.k)}
    if delta < 0:
        assert res.k >= k - 1e-12, "growing must never lower the ratio"
        assert after == before | set(res.added)
        total = sum(c.interference for c in cands if c.vehicle in res.added)
        assert res.saturated or total >= -delta - 1e-9
    elif delta > 0:
        if region_members(cands, k):
            assert res.k <= k + 1e-12, "shrinking must never raise the ratio"
        assert after == before - set(res.removed)
        removed_i = sum(c.interference for c in cands if c.vehicle in res.removed)
        assert removed_i <= delta + 1e-9
    else:
        assert res.k == k


def test_closed_loop_reaches_target_and_stabilizes():
    """Mean-field closed loop on a static candidate line: reliability must
    reach the target and the ratio settle (within one candidate hop) in at
    most 50 rounds."""
    signal = 20.0  # noise units, ~13 dB
    cands = [cand(1.1 + 0.1 * i, i, 0.4) for i in range(30)]
    ln = link(k=0.0, c=0.2)

    def measured(k):
        interf = sum(c.interference for c in cands if c.metric > k)
        return RADIO.pdr(signal / (1.0 + interf))

    ks = []
    for _ in range(50):
        y = measured(ln.k)
        budget = compute_interference_budget(ln, y, RADIO)
        res = adapt_exclusion_ratio(ln, budget, cands)
        ln.k = res.k
        update_smoothed_reliability(ln, y)
        ks.append(ln.k)
    assert measured(ln.k) >= 0.9, f"loop failed to reach target, k={ln.k}"
    tail = ks[-5:]
    assert max(tail) - min(tail) <= 0.1 + 1e-9, \
        f"ratio still hunting more than one candidate step: {tail}"

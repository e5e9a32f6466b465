import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcredit.calibrate import calibrate_at1p_cascade, pv_windows
from fpcredit.cdspricer import (
    cds_pv,
    fair_spread,
    mixture_curve_cds_pv,
    quote_pv,
    scenario_cds_pv,
)
from fpcredit.errors import InputError
from fpcredit.intensity import HazardCurve, strip_hazard
from fpcredit.marketdata import build_schedule, flat_curve
from fpcredit.survival import FirmDynamics, ScenarioSet, survival_grid


class _Flat:
    def __init__(self, lam):
        self.lam = lam

    def survival(self, t):
        return np.exp(-self.lam * np.asarray(t, dtype=float))


def _analytic_legs(lam, r, schedule):
    """Continuous-time legs for flat hazard and rate (per unit rate / LGD)."""
    k = lam + r
    premium = sum(a * math.exp(-k * t) for a, t in zip(schedule.accruals, schedule.dates))
    protection = lam / k * (1 - math.exp(-k * schedule.maturity))
    accrual = 0.0
    for s, e in zip(schedule.period_starts, schedule.dates):
        # int_s^e (t - s) lam e^{-k t} dt
        accrual += lam * (math.exp(-k * s) * (1 - math.exp(-k * (e - s)) * (1 + k * (e - s))) / k ** 2)
    return premium, accrual, protection


def test_hand_oracle_flat_hazard(flat3):
    sched = build_schedule(0.0, 5.0, 4)
    lam, rate, lgd = 0.02, 100.0, 0.6
    res = cds_pv(sched, rate, lgd, survival_grid(_Flat(lam), 5.0), flat3)
    premium, accrual, protection = _analytic_legs(lam, 0.03, sched)
    assert res.premium_leg == pytest.approx(rate * premium, abs=1e-9)
    assert res.accrual_on_default_leg == pytest.approx(rate * accrual, abs=2e-3)
    assert res.protection_leg == pytest.approx(lgd * protection * 1e4, abs=2e-3)
    assert res.pv == pytest.approx(res.protection_leg - res.premium_leg - res.accrual_on_default_leg)
    assert res.seller_pv == pytest.approx(-res.pv, abs=1e-12)


def test_fair_spread_zeroes_pv(flat3, ref_firm):
    sched = build_schedule(0.0, 7.0, 4)
    curve = survival_grid(ref_firm, 7.0)
    r = fair_spread(sched, 0.6, curve, flat3)
    assert abs(cds_pv(sched, r, 0.6, curve, flat3).pv) < 1e-9
    assert cds_pv(sched, r, 0.6, curve, flat3).fair_spread == pytest.approx(r)


def test_zero_lgd_zero_rate(flat3, ref_firm):
    res = cds_pv(build_schedule(0.0, 5.0, 4), 0.0, 0.0, survival_grid(ref_firm, 5.0), flat3)
    assert res.pv == 0.0


def test_no_default_risk(flat3):
    assert fair_spread(build_schedule(0.0, 5.0, 4), 0.6, survival_grid(_Flat(0.0), 5.0), flat3) == 0.0


@pytest.mark.parametrize("maturity,freq", [(1.0, 4), (5.0, 4), (10.0, 2), (3.0, 12)])
def test_credit_triangle(flat3, maturity, freq):
    sched = build_schedule(0.0, maturity, freq)
    r = fair_spread(sched, 0.6, survival_grid(_Flat(0.01), maturity), flat3)
    assert abs(r / 60.0 - 1.0) < 0.02


def test_pv_windows_reference_values(vod, flat3):
    hazard = strip_hazard(vod, flat3)
    curve = survival_grid(hazard, 10.0)
    bid_1y = quote_pv(vod[0], curve, flat3, vod[0].r_bid)
    ask_1y = quote_pv(vod[0], curve, flat3, vod[0].r_ask)
    assert bid_1y == pytest.approx(2.56, abs=0.35)
    assert ask_1y == pytest.approx(-2.56, abs=0.35)
    assert quote_pv(vod[4], curve, flat3, vod[4].r_bid) == pytest.approx(41.14, abs=3.0)
    windows = pv_windows(vod, flat3)
    np.testing.assert_allclose(windows[:, 1], [2.56, 2.93, 4.67, 24.94, 41.14], atol=0.7)


def test_at1p_fair_spreads_reproduce_mids(vod, flat3):
    firm = calibrate_at1p_cascade(vod, 0.4, 0.5, flat3)
    curve = survival_grid(firm, 10.0)
    for q in vod:
        assert abs(fair_spread(q.schedule(), q.lgd, curve, flat3) - q.r_mid) < 0.01


def test_scenario_vs_mixture_pricing(vod, flat3):
    scen = ScenarioSet.from_arrays([0.3188, 0.6592], [0.24, 0.24], [0.9483, 0.0517], 0.5)
    for q in vod:
        a = scenario_cds_pv(q.schedule(), q.r_mid, q.lgd, scen, flat3)
        b = mixture_curve_cds_pv(q.schedule(), q.r_mid, q.lgd, scen, flat3)
        assert abs(a - b) < 0.05
    one = ScenarioSet.single(FirmDynamics.constant(0.4, 0.5, 0.2))
    q = vod[2]
    assert scenario_cds_pv(q.schedule(), 43.0, 0.6, one, flat3) == pytest.approx(
        cds_pv(q.schedule(), 43.0, 0.6, survival_grid(one.firms[0], 5.0), flat3).pv, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.001, 0.05), st.floats(0.0, 0.05))
def test_fair_spread_monotone(lgd_a, lgd_b, lam, bump):
    sched = build_schedule(0.0, 5.0, 4)
    disc = flat_curve(0.03)
    lo, hi = sorted((lgd_a, lgd_b))
    curve = survival_grid(_Flat(lam), 5.0)
    assert fair_spread(sched, lo, curve, disc) <= fair_spread(sched, hi, curve, disc) + 1e-12
    riskier = survival_grid(_Flat(lam + bump), 5.0)
    assert fair_spread(sched, lo, curve, disc) <= fair_spread(sched, lo, riskier, disc) + 1e-9


def test_grid_convergence(vod, flat3):
    hazard = strip_hazard(vod, flat3)
    for q in vod:
        a = quote_pv(q, survival_grid(hazard, 10.0, 1 / 52), flat3, q.r_bid)
        b = quote_pv(q, survival_grid(hazard, 10.0, 1 / 104), flat3, q.r_bid)
        assert abs(a - b) < 0.05


def test_refuses_coarse_grid(flat3):
    hazard = HazardCurve(((1.0, 0.01),))
    with pytest.raises(InputError, match="coarser than monthly"):
        cds_pv(build_schedule(0.0, 5.0, 4), 50.0, 0.6, survival_grid(hazard, 5.0, 0.25), flat3)
    with pytest.raises(InputError):
        cds_pv(build_schedule(0.0, 5.0, 4), 50.0, 0.6, survival_grid(hazard, 3.0), flat3)

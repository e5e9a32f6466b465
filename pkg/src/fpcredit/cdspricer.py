"""Running-CDS valuation from an arbitrary survival curve.

Amounts are in basis points of notional. The reported ``pv`` is the
protection buyer's value: protection leg minus premium and
accrual-on-default legs, so a buyer paying less than the fair rate sees a
positive value.

The Stieltjes integrals against ``dQ`` are discretised on a grid that
contains every premium date and subdivides each accrual period into equal
steps no longer than ``step``; each survival decrement is discounted at the
midpoint of its sub-interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fpcredit.errors import InputError
from fpcredit.marketdata import BPS, CdsQuote, DiscountCurve, PaymentSchedule
from fpcredit.survival import ScenarioSet, SurvivalCurve, survival_grid

DEFAULT_STEP = 1.0 / 52.0
MAX_STEP = 1.0 / 12.0


@dataclass(frozen=True)
class CdsPricingResult:
    """Leg values in bps of notional; ``pv`` from the protection buyer's side."""

    pv: float
    premium_leg: float
    accrual_on_default_leg: float
    protection_leg: float
    fair_spread: float

    @property
    def seller_pv(self) -> float:
        """Value to the protection seller (premium receiver)."""
        return self.premium_leg + self.accrual_on_default_leg - self.protection_leg


class CdsGrid:
    """Precomputed integration grid and discount factors for one schedule.

    Reused across many survival curves during calibration; ``legs`` is
    vectorised over any leading axes of the survival array.
    """

    def __init__(self, schedule: PaymentSchedule, discount: DiscountCurve, step: float = DEFAULT_STEP):
        if step <= 0.0:
            raise InputError("integration step must be positive")
        if step > MAX_STEP + 1e-12:
            raise InputError(f"integration step {step:.4f}y is coarser than monthly; refusing")
        self.schedule = schedule
        self.step = step
        times = [schedule.start]
        pay_idx = []
        period_start = []
        for s, e in zip(schedule.period_starts, schedule.dates):
            n = max(1, math.ceil((e - s) / step - 1e-9))
            sub = s + (e - s) * np.arange(1, n + 1) / n
            sub[-1] = e
            times.extend(sub.tolist())
            period_start.extend([s] * n)
            pay_idx.append(len(times) - 1)
        self.times = np.asarray(times)
        self.pay_index = np.asarray(pay_idx)
        mids = 0.5 * (self.times[1:] + self.times[:-1])
        self.mid_discount = discount.discount(mids)
        self.mid_accrued = mids - np.asarray(period_start)
        self.pay_weight = np.asarray(schedule.accruals) * discount.discount(np.asarray(schedule.dates))

    def legs(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Premium annuity, accrual annuity and protection integral per unit rate/LGD.

        ``q`` holds survival probabilities on ``self.times`` (last axis).
        """
        q = np.asarray(q, dtype=float)
        dq = q[..., :-1] - q[..., 1:]
        premium = q[..., self.pay_index] @ self.pay_weight
        accrual = dq @ (self.mid_accrued * self.mid_discount)
        protection = dq @ self.mid_discount
        return premium, accrual, protection

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Linear functionals on ``q``: (premium + accrual annuity, protection).

        ``legs`` summed as ``q @ annuity`` and ``q @ protection``.
        """
        n = len(self.times)
        annuity = np.zeros(n)
        protection = np.zeros(n)
        np.add.at(annuity, self.pay_index, self.pay_weight)
        acc = self.mid_accrued * self.mid_discount
        annuity[:-1] += acc
        annuity[1:] -= acc
        protection[:-1] += self.mid_discount
        protection[1:] -= self.mid_discount
        return annuity, protection

    def pv(self, q: np.ndarray, rate_bps, lgd: float) -> np.ndarray:
        """Buyer PV in bps for survival values ``q`` on the grid."""
        premium, accrual, protection = self.legs(q)
        return lgd * protection / BPS - np.asarray(rate_bps) * (premium + accrual)


def _grid_for(schedule: PaymentSchedule, survival: SurvivalCurve, discount: DiscountCurve) -> CdsGrid:
    if survival.step > MAX_STEP + 1e-12:
        raise InputError(f"survival grid step {survival.step:.4f}y is coarser than monthly; refusing")
    if survival.horizon < schedule.maturity - 1e-12:
        raise InputError(
            f"survival grid ends at {survival.horizon}y, before CDS maturity {schedule.maturity}y"
        )
    return CdsGrid(schedule, discount, survival.step)


def _result(grid: CdsGrid, q: np.ndarray, rate_bps: float, lgd: float) -> CdsPricingResult:
    premium, accrual, protection = (float(x) for x in grid.legs(q))
    protection_bps = lgd * protection / BPS
    annuity = premium + accrual
    fair = protection_bps / annuity if annuity > 0.0 else math.nan
    return CdsPricingResult(
        pv=protection_bps - rate_bps * annuity,
        premium_leg=rate_bps * premium,
        accrual_on_default_leg=rate_bps * accrual,
        protection_leg=protection_bps,
        fair_spread=fair,
    )


def cds_pv(schedule: PaymentSchedule, rate_bps: float, lgd: float, survival: SurvivalCurve,
           discount: DiscountCurve) -> CdsPricingResult:
    """Value a running CDS paying ``rate_bps`` on ``schedule``."""
    grid = _grid_for(schedule, survival, discount)
    return _result(grid, survival(grid.times), rate_bps, lgd)


def fair_spread(schedule: PaymentSchedule, lgd: float, survival: SurvivalCurve,
                discount: DiscountCurve) -> float:
    """Running rate (bps) that zeroes the CDS value."""
    grid = _grid_for(schedule, survival, discount)
    premium, accrual, protection = (float(x) for x in grid.legs(survival(grid.times)))
    annuity = premium + accrual
    if annuity <= 0.0:
        raise InputError("zero premium annuity; fair spread undefined")
    if protection <= 0.0:
        return 0.0
    return lgd * protection / BPS / annuity


def scenario_cds_pv(schedule: PaymentSchedule, rate_bps: float, lgd: float, scenarios: ScenarioSet,
                    discount: DiscountCurve, step: float = DEFAULT_STEP) -> float:
    """Scenario-mixture CDS value: price under each scenario, then average by ``p_i``."""
    total = 0.0
    for firm, p in scenarios.scenarios:
        curve = survival_grid(firm, schedule.maturity, step)
        total += p * cds_pv(schedule, rate_bps, lgd, curve, discount).pv
    return total


def mixture_curve_cds_pv(schedule: PaymentSchedule, rate_bps: float, lgd: float, scenarios: ScenarioSet,
                         discount: DiscountCurve, step: float = DEFAULT_STEP) -> float:
    """Same value computed off the mixture survival curve's decrements."""
    curve = survival_grid(scenarios, schedule.maturity, step)
    return cds_pv(schedule, rate_bps, lgd, curve, discount).pv


def quote_pv(quote: CdsQuote, survival: SurvivalCurve, discount: DiscountCurve,
             rate_bps: float | None = None) -> float:
    """Buyer PV of a quoted CDS at ``rate_bps`` (mid by default)."""
    rate = quote.r_mid if rate_bps is None else rate_bps
    return cds_pv(quote.schedule(), rate, quote.lgd, survival, discount).pv

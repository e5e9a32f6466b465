"""First-passage structural credit models with scenario barriers and volatilities.

The package covers closed-form AT1P survival probabilities, their scenario
mixtures (SBAT1P / SVBAT1P), running-CDS pricing off any survival curve,
three CDS calibration procedures, and Monte Carlo valuation of counterparty
risk in equity return swaps.
"""
from fpcredit.errors import CalibrationError, FpcError, InputError, NonConvergenceError
from fpcredit.marketdata import (
    CdsQuote,
    DiscountCurve,
    DividendCurve,
    PaymentSchedule,
    build_schedule,
    discount_factor,
    flat_curve,
    forward_simple_rate,
    load_curve,
    load_quotes,
    save_quotes,
)
from fpcredit.survival import (
    FirmDynamics,
    ScenarioSet,
    SurvivalCurve,
    barrier_level,
    integrated_variance,
    mixture_survival,
    survival_grid,
    survival_probability,
)
from fpcredit.intensity import HazardCurve, hazard_survival, strip_hazard
from fpcredit.cdspricer import CdsPricingResult, cds_pv, fair_spread, scenario_cds_pv

__all__ = [
    "CalibrationError",
    "CdsPricingResult",
    "CdsQuote",
    "DiscountCurve",
    "DividendCurve",
    "FirmDynamics",
    "FpcError",
    "HazardCurve",
    "InputError",
    "NonConvergenceError",
    "PaymentSchedule",
    "ScenarioSet",
    "SurvivalCurve",
    "barrier_level",
    "build_schedule",
    "cds_pv",
    "discount_factor",
    "fair_spread",
    "flat_curve",
    "forward_simple_rate",
    "hazard_survival",
    "integrated_variance",
    "load_curve",
    "load_quotes",
    "mixture_survival",
    "save_quotes",
    "scenario_cds_pv",
    "strip_hazard",
    "survival_grid",
    "survival_probability",
]

__version__ = "0.1.0"

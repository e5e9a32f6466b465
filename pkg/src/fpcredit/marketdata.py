"""Term structures, CDS quotes, payment schedules and CSV ingestion.

All model times are year fractions from the valuation date. Rates are
continuously compounded; CDS quotes are carried in basis points.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fpcredit.errors import InputError

logger = logging.getLogger(__name__)

BPS = 1.0e-4

QUOTE_HEADER = ("tenor_years", "bid_bps", "ask_bps", "mid_bps", "recovery")
CURVE_HEADER = ("time_years", "zero_rate")
ALLOWED_FREQUENCIES = (1, 2, 4, 12)


@dataclass(frozen=True)
class _ZeroCurve:
    """Pillar curve of average (zero) rates.

    The cumulative integral ``t * z(t)`` is interpolated linearly between
    pillars, anchored at ``(0, 0)``; beyond the last pillar the zero rate is
    held flat.
    """

    times: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.times)
        rates = tuple(float(r) for r in self.rates)
        if len(times) == 0 or len(times) != len(rates):
            raise InputError("curve needs at least one pillar and matching time/rate lengths")
        if times[0] < 0.0:
            raise InputError(f"first pillar time must be >= 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("pillar times must be strictly increasing")
        if not all(math.isfinite(r) for r in rates):
            raise InputError("pillar rates must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)
        # Knots of the piecewise-linear cumulative integral.
        knot_t = [0.0] + [t for t in times if t > 0.0]
        knot_v = [0.0] + [t * r for t, r in zip(times, rates) if t > 0.0]
        object.__setattr__(self, "_knot_t", np.asarray(knot_t))
        object.__setattr__(self, "_knot_v", np.asarray(knot_v))

    @classmethod
    def flat(cls, rate: float):
        return cls((1.0,), (rate,))

    @property
    def pillars(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.rates))

    def integral(self, t):
        """Return the cumulative integral of the instantaneous rate on ``[0, t]``."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise InputError("time must be non-negative")
        last_t = self._knot_t[-1]
        last_rate = self.rates[-1]
        inside = np.interp(t_arr, self._knot_t, self._knot_v)
        out = np.where(t_arr > last_t, t_arr * last_rate, inside)
        if len(self._knot_t) == 1:
            out = t_arr * last_rate
        return out if out.ndim else float(out)

    def zero_rate(self, t: float) -> float:
        if t <= 0.0:
            return self.rates[0]
        return self.integral(t) / t


class DiscountCurve(_ZeroCurve):
    """Deterministic risk-free term structure ``P(0, t)``."""

    def discount(self, t):
        return np.exp(-self.integral(t))

    def forward_discount(self, t1, t2):
        """``P(t1, t2) = P(0, t2) / P(0, t1)`` under deterministic rates."""
        return np.exp(self.integral(t1) - self.integral(t2))


class DividendCurve(_ZeroCurve):
    """Continuous payout yield ``q(t)``, stored as average yields per pillar."""

    def growth(self, t):
        """Return ``exp(-int_0^t q(s) ds)``."""
        return np.exp(-self.integral(t))


def flat_curve(rate: float = 0.03) -> DiscountCurve:
    """Flat continuously-compounded discount curve (3% unless stated)."""
    return DiscountCurve.flat(rate)


def discount_factor(curve: DiscountCurve, t: float) -> float:
    """Discount factor ``P(0, t)``; raises :class:`InputError` for ``t < 0``."""
    if t < 0.0:
        raise InputError(f"negative time {t}")
    return float(curve.discount(t))


def forward_simple_rate(curve: DiscountCurve, t1: float, t2: float, accrual: float) -> float:
    """Simply-compounded forward rate for ``[t1, t2]`` with year fraction ``accrual``."""
    if not 0.0 <= t1 < t2:
        raise InputError(f"need 0 <= t1 < t2, got t1={t1}, t2={t2}")
    if accrual <= 0.0:
        raise InputError("accrual must be positive")
    return (discount_factor(curve, t1) / discount_factor(curve, t2) - 1.0) / accrual


@dataclass(frozen=True)
class PaymentSchedule:
    """Premium dates ``T_{a+1} .. T_b`` after ``start = T_a`` with accruals."""

    start: float
    dates: tuple[float, ...]
    accruals: tuple[float, ...]

    def __post_init__(self) -> None:
        dates = tuple(float(d) for d in self.dates)
        accruals = tuple(float(a) for a in self.accruals)
        if len(dates) == 0:
            raise InputError("schedule needs at least one date")
        if len(dates) != len(accruals):
            raise InputError("dates and accruals must have equal length")
        if dates[0] <= self.start or any(b <= a for a, b in zip(dates, dates[1:])):
            raise InputError("schedule dates must be strictly increasing after start")
        if any(a <= 0.0 for a in accruals):
            raise InputError("accruals must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "accruals", accruals)

    @property
    def maturity(self) -> float:
        return self.dates[-1]

    @property
    def period_starts(self) -> tuple[float, ...]:
        return (self.start,) + self.dates[:-1]

    def next_index(self, t):
        """Zero-based index of the first payment date strictly after ``t``.

        Equals ``len(dates)`` once ``t >= maturity``.
        """
        return np.searchsorted(np.asarray(self.dates), t, side="right")

    def accrual_start(self, t):
        """Start ``T_{beta(t)-1}`` of the premium period containing ``t``."""
        starts = np.asarray(self.period_starts)
        idx = np.minimum(self.next_index(t), len(self.dates) - 1)
        return starts[idx]


def build_schedule(start: float, maturity: float, frequency: int = 4) -> PaymentSchedule:
    """Regular schedule every ``1/frequency`` years with a short final stub."""
    if frequency not in ALLOWED_FREQUENCIES:
        raise InputError(f"frequency must be one of {ALLOWED_FREQUENCIES}, got {frequency}")
    if maturity <= start:
        raise InputError(f"non-positive tenor: start={start}, maturity={maturity}")
    step = 1.0 / frequency
    n_regular = int(math.floor((maturity - start) / step + 1e-9))
    dates = [start + k * step for k in range(1, n_regular + 1)]
    if dates and abs(dates[-1] - maturity) < 1e-9:
        dates[-1] = maturity
    else:
        dates.append(maturity)
    prev = [start] + dates[:-1]
    accruals = [d - p for d, p in zip(dates, prev)]
    return PaymentSchedule(start, tuple(dates), tuple(accruals))


@dataclass(frozen=True)
class CdsQuote:
    """Running-CDS market quote, rates in basis points."""

    tenor: float
    r_bid: float
    r_ask: float
    r_mid: float
    recovery: float = 0.4
    frequency: int = 4

    def __post_init__(self) -> None:
        if self.tenor <= 0.0:
            raise InputError(f"tenor must be positive, got {self.tenor}")
        if min(self.r_bid, self.r_ask, self.r_mid) < 0.0:
            raise InputError("CDS rates must be non-negative")
        if not self.r_bid <= self.r_mid <= self.r_ask:
            raise InputError(
                f"crossed quote at tenor {self.tenor}: bid={self.r_bid}, mid={self.r_mid}, ask={self.r_ask}"
            )
        if not 0.0 <= self.recovery < 1.0:
            raise InputError(f"recovery must lie in [0, 1), got {self.recovery}")

    @property
    def lgd(self) -> float:
        return 1.0 - self.recovery

    @property
    def bid_ask(self) -> float:
        return self.r_ask - self.r_bid

    def schedule(self, start: float = 0.0) -> PaymentSchedule:
        return build_schedule(start, self.tenor, self.frequency)

    def scaled(self, factor: float) -> "CdsQuote":
        """Quote with all rates multiplied by ``factor`` (doubled-spread experiments)."""
        return CdsQuote(
            self.tenor, self.r_bid * factor, self.r_ask * factor, self.r_mid * factor,
            self.recovery, self.frequency,
        )


def _data_rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield lineno, [cell.strip() for cell in row]


def load_quotes(path) -> list[CdsQuote]:
    """Read a CDS quote CSV (``tenor_years,bid_bps,ask_bps,mid_bps,recovery``).

    Returns the quotes sorted by tenor. Parse and validation errors raise
    :class:`InputError` naming the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"quote file not found: {path}")
    rows = list(_data_rows(path))
    if not rows:
        logger.warning("quote file %s is empty", path)
        return []
    lineno, header = rows[0]
    if tuple(h.lower() for h in header) != QUOTE_HEADER:
        raise InputError(f"{path}:{lineno}: expected header {','.join(QUOTE_HEADER)}")
    quotes: list[CdsQuote] = []
    seen: dict[float, int] = {}
    for lineno, row in rows[1:]:
        if len(row) != len(QUOTE_HEADER):
            raise InputError(f"{path}:{lineno}: expected {len(QUOTE_HEADER)} fields, got {len(row)}")
        try:
            tenor, bid, ask, mid, rec = (float(x) for x in row)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if tenor in seen:
            raise InputError(f"{path}:{lineno}: duplicate tenor {tenor} (first on line {seen[tenor]})")
        seen[tenor] = lineno
        try:
            quotes.append(CdsQuote(tenor, bid, ask, mid, rec))
        except InputError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    if not quotes:
        logger.warning("quote file %s has no data rows", path)
    return sorted(quotes, key=lambda q: q.tenor)


def save_quotes(quotes: Sequence[CdsQuote], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(QUOTE_HEADER)
        for q in quotes:
            writer.writerow([repr(float(v)) for v in (q.tenor, q.r_bid, q.r_ask, q.r_mid, q.recovery)])


def load_curve(path) -> DiscountCurve:
    """Read a discount curve CSV with header ``time_years,zero_rate``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"curve file not found: {path}")
    rows = list(_data_rows(path))
    if not rows:
        raise InputError(f"{path}: empty curve file")
    lineno, header = rows[0]
    if tuple(h.lower() for h in header) != CURVE_HEADER:
        raise InputError(f"{path}:{lineno}: expected header {','.join(CURVE_HEADER)}")
    times, rates = [], []
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            times.append(float(row[0]))
            rates.append(float(row[1]))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    try:
        return DiscountCurve(tuple(times), tuple(rates))
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def save_curve(curve: DiscountCurve, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for t, z in curve.pillars:
            writer.writerow([repr(t), repr(z)])


# Vodafone running-CDS quotes, 10 March 2004, recovery 40%.
VODAFONE_QUOTES: tuple[CdsQuote, ...] = (
    CdsQuote(1.0, 19.0, 24.0, 21.5, 0.4),
    CdsQuote(3.0, 32.0, 34.0, 33.0, 0.4),
    CdsQuote(5.0, 42.0, 44.0, 43.0, 0.4),
    CdsQuote(7.0, 45.0, 53.0, 49.0, 0.4),
    CdsQuote(10.0, 56.0, 66.0, 61.0, 0.4),
)

"""Monte Carlo counterparty risk in an equity return swap.

The counterparty's firm value is simulated in the coordinate
``X = log(V / H_hat)``, a Brownian motion with drift ``beta * sigma^2``: the
barrier is flat at zero there, so the Brownian-bridge crossing probability
``exp(-2 X_{j-1} X_j / (sigma^2 dt))`` is exact within each step. Given a
default time inside a step, the firm's Brownian driver at ``tau`` follows
from the hitting condition ``X(tau) = 0``. The reference equity loads on the
firm driver with correlation ``rho`` plus an independent Brownian motion that
only has to be sampled at ``tau`` (and at schedule dates when paths are
recorded). Simulated defaults therefore do not depend on ``rho``: one sample
prices every correlation with common random numbers.

Prices are quoted as ``1e4 * ERS(0) / K``, i.e. basis points of one currency
unit per share.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from fpcredit.errors import InputError, NonConvergenceError
from fpcredit.marketdata import BPS, DiscountCurve, DividendCurve, PaymentSchedule, build_schedule
from fpcredit.survival import ScenarioSet, mixture_survival

BLOCK_SIZE = 65536
THREADS_ENV = "FPC_THREADS"


@dataclass(frozen=True)
class ErsContract:
    """Equity return swap on ``stock_count`` shares against floating plus ``spread_bps``."""

    stock_count: float
    s0: float
    spread_bps: float
    schedule: PaymentSchedule
    counterparty_recovery: float = 0.4
    stub_fixing: str = "period_start"

    def __post_init__(self) -> None:
        if self.stock_count <= 0.0 or self.s0 <= 0.0:
            raise InputError("stock count and initial price must be positive")
        if not 0.0 <= self.counterparty_recovery <= 1.0:
            raise InputError("counterparty recovery must lie in [0, 1]")
        if self.stub_fixing not in ("period_start", "at_default"):
            raise InputError(f"unknown stub fixing {self.stub_fixing!r}")

    @classmethod
    def standard(cls, s0: float = 20.0, maturity: float = 5.0, frequency: int = 2,
                 spread_bps: float = 0.0, recovery: float = 0.4, stock_count: float = 1.0,
                 stub_fixing: str = "period_start") -> "ErsContract":
        return cls(stock_count, s0, spread_bps, build_schedule(0.0, maturity, frequency), recovery, stub_fixing)

    @property
    def maturity(self) -> float:
        return self.schedule.maturity

    @property
    def lgd(self) -> float:
        return 1.0 - self.counterparty_recovery

    def with_spread(self, spread_bps: float) -> "ErsContract":
        return ErsContract(self.stock_count, self.s0, spread_bps, self.schedule,
                           self.counterparty_recovery, self.stub_fixing)


@dataclass(frozen=True)
class EquityDynamics:
    s0: float
    sigma: float
    dividend_yield: float = 0.0

    def __post_init__(self) -> None:
        if self.s0 <= 0.0 or self.sigma <= 0.0:
            raise InputError("equity s0 and sigma must be positive")

    @property
    def dividends(self) -> DividendCurve:
        return DividendCurve.flat(self.dividend_yield)


@dataclass(frozen=True)
class McConfig:
    paths: int = 200_000
    steps_per_year: int = 250
    seed: int = 20040310
    rho: float = 0.0
    control_variate: bool = True
    brownian_bridge: bool = True
    threads: Optional[int] = None
    record_paths: bool = False

    def __post_init__(self) -> None:
        if self.paths < 1:
            raise InputError("paths must be >= 1")
        if self.steps_per_year < 12:
            raise InputError("steps_per_year must be >= 12")
        if not -1.0 <= self.rho <= 1.0:
            raise InputError("correlation must lie in [-1, 1]")

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise InputError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return os.cpu_count() or 1


@dataclass
class McEstimate:
    """MC price in bps (``1e4 * ERS(0) / K``) with its standard error."""

    value: float
    std_error: float
    paths_used: int
    cv_beta: float
    plain_value: float
    plain_std_error: float
    spread_bps: float
    rho: float

    def to_dict(self) -> dict:
        return {
            "value_bps": self.value,
            "std_error_bps": self.std_error,
            "paths": self.paths_used,
            "cv_beta": self.cv_beta,
            "plain_value_bps": self.plain_value,
            "plain_std_error_bps": self.plain_std_error,
            "spread_bps": self.spread_bps,
            "rho": self.rho,
        }


@dataclass
class DefaultSample:
    """Defaulted paths of a simulation; ``rho``-free ingredients only.

    ``w_firm`` is the firm's Brownian driver at ``tau`` and ``w_indep`` the
    independent equity driver at ``tau``. When paths are recorded, the same
    drivers are also kept for every path at ``record_times``.
    """

    paths: int
    tau: np.ndarray
    w_firm: np.ndarray
    w_indep: np.ndarray
    scenario: np.ndarray
    horizon: float
    record_times: Optional[np.ndarray] = None
    record_firm: Optional[np.ndarray] = None
    record_indep: Optional[np.ndarray] = None
    record_default: Optional[np.ndarray] = field(default=None, repr=False)

    def default_fraction(self, t: float) -> float:
        return float(np.count_nonzero(self.tau <= t)) / self.paths

    def equity_at_default(self, equity: EquityDynamics, discount: DiscountCurve, rho: float) -> np.ndarray:
        return _equity(equity, discount, self.tau, self.w_firm, self.w_indep, rho)

    def equity_at_dates(self, equity: EquityDynamics, discount: DiscountCurve, rho: float) -> np.ndarray:
        if self.record_times is None:
            raise InputError("simulation ran without record_paths")
        return _equity(equity, discount, self.record_times[None, :], self.record_firm, self.record_indep, rho)


def _equity(equity: EquityDynamics, discount: DiscountCurve, t, w_firm, w_indep, rho: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    carry = discount.integral(t) - equity.dividends.integral(t)
    load = math.sqrt(max(0.0, 1.0 - rho * rho))
    shock = equity.sigma * (rho * w_firm + load * w_indep)
    return equity.s0 * np.exp(carry - 0.5 * equity.sigma ** 2 * t + shock)


def _time_grid(horizon: float, steps_per_year: int, extra: Sequence[float]) -> np.ndarray:
    n = max(1, math.ceil(horizon * steps_per_year - 1e-9))
    base = np.linspace(0.0, horizon, n + 1)
    pts = [t for t in extra if 0.0 < t < horizon]
    grid = np.unique(np.concatenate((base, pts)))
    # Drop near-duplicates created by floating-point breakpoints.
    keep = np.concatenate(([True], np.diff(grid) > 1e-12))
    return grid[keep]


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _simulate_block(block: int, n: int, grid: np.ndarray, sig_tab: np.ndarray, x0: np.ndarray,
                    beta: float, cum_p: np.ndarray, seed: int, bridge: bool,
                    record_idx: Optional[np.ndarray]):
    rng = _block_rng(seed, block)
    scen = np.searchsorted(cum_p, rng.random(n), side="right").astype(np.int16)
    scen = np.minimum(scen, len(cum_p) - 1)
    x = x0[scen].copy()
    w = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    tau = np.full(n, np.inf)
    w_tau = np.zeros(n)
    rec_w = None
    if record_idx is not None:
        rec_w = np.zeros((n, len(record_idx)))
        rec_pos = {int(j): k for k, j in enumerate(record_idx)}
    dts = np.diff(grid)
    sq = np.sqrt(dts)
    for j, dt in enumerate(dts):
        z = rng.standard_normal(n)
        s = sig_tab[scen, j]
        x_new = x + beta * s * s * dt + s * sq[j] * z
        w_new = w + sq[j] * z
        hit = alive & (x_new <= 0.0)
        if bridge:
            cand = np.flatnonzero(alive & ~hit)
            if cand.size:
                p = np.exp(-2.0 * x[cand] * x_new[cand] / (sig_tab[scen[cand], j] ** 2 * dt))
                live = p > 1e-300
                cand, p = cand[live], p[live]
                u = rng.random(cand.size)
                hit[cand[u < p]] = True
            idx = np.flatnonzero(hit)
            if idx.size:
                frac = rng.random(idx.size)
                t_hit = grid[j] + frac * dt
                s_hit = s[idx]
                tau[idx] = t_hit
                # X(tau) = 0 pins the driver given X at the step start.
                w_tau[idx] = w[idx] + (-x[idx] - beta * s_hit * s_hit * frac * dt) / s_hit
        else:
            idx = np.flatnonzero(hit)
            tau[idx] = grid[j + 1]
            w_tau[idx] = w_new[idx]
        alive &= ~hit
        x, w = x_new, w_new
        if rec_w is not None and (j + 1) in rec_pos:
            rec_w[:, rec_pos[j + 1]] = w
    # Independent equity driver: at record dates (if any), then at tau by bridging.
    if record_idx is not None:
        rec_t = grid[record_idx]
        inc = rng.standard_normal((n, len(rec_t))) * np.sqrt(np.diff(np.concatenate(([0.0], rec_t))))
        rec_perp = np.cumsum(inc, axis=1)
    z_tau = rng.standard_normal(n)
    defaulted = np.flatnonzero(np.isfinite(tau))
    t_d = tau[defaulted]
    if record_idx is not None:
        knots_t = np.concatenate(([0.0], rec_t))
        knots_w = np.hstack((np.zeros((n, 1)), rec_perp))[defaulted]
        k = np.clip(np.searchsorted(knots_t, t_d, side="right") - 1, 0, len(knots_t) - 2)
        a, b = knots_t[k], knots_t[k + 1]
        wa = knots_w[np.arange(defaulted.size), k]
        wb = knots_w[np.arange(defaulted.size), k + 1]
        frac = (t_d - a) / (b - a)
        mean = wa + frac * (wb - wa)
        var = np.maximum((t_d - a) * (b - t_d) / (b - a), 0.0)
        w_perp = mean + np.sqrt(var) * z_tau[defaulted]
    else:
        w_perp = np.sqrt(t_d) * z_tau[defaulted]
    out = (t_d, w_tau[defaulted], w_perp, scen[defaulted])
    rec = (rec_w, rec_perp, np.isfinite(tau)) if record_idx is not None else None
    return out, rec


def simulate_default_and_equity(scenarios: ScenarioSet, horizon: float, config: McConfig,
                                record_times: Optional[Sequence[float]] = None) -> DefaultSample:
    """Simulate counterparty default times and the drivers needed for the equity.

    Each path first draws its scenario (independently of the Brownian
    motions), then evolves ``log(V / H_hat)`` on a grid with
    ``steps_per_year`` steps that also contains every volatility breakpoint
    and record time.
    """
    if horizon <= 0.0:
        raise InputError("horizon must be positive")
    firms = scenarios.firms
    betas = {f.beta for f in firms}
    if len(betas) != 1:
        raise InputError("all scenarios must share the barrier shape beta")
    beta = betas.pop()
    extra = [float(t) for f in firms for t in f.breakpoints]
    if record_times is not None:
        extra += [float(t) for t in record_times]
    grid = _time_grid(horizon, config.steps_per_year, extra)
    mids = 0.5 * (grid[1:] + grid[:-1])
    sig_tab = np.stack([f.sigma_at(mids) for f in firms])
    x0 = np.array([-math.log(f.h_ratio) for f in firms])
    cum_p = np.cumsum(scenarios.probabilities)
    cum_p[-1] = 1.0
    record_idx = None
    rec_times = None
    if config.record_paths:
        rec_times = np.array(sorted(set(float(t) for t in (record_times or [horizon]))))
        record_idx = np.array([int(np.argmin(np.abs(grid - t))) for t in rec_times])
    n_blocks = math.ceil(config.paths / BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, config.paths - b * BLOCK_SIZE) for b in range(n_blocks)]

    def run(b: int):
        return _simulate_block(b, sizes[b], grid, sig_tab, x0, beta, cum_p, config.seed,
                               config.brownian_bridge, record_idx)

    workers = min(config.worker_count(), n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]
    parts = [r[0] for r in results]
    sample = DefaultSample(
        paths=config.paths,
        tau=np.concatenate([p[0] for p in parts]),
        w_firm=np.concatenate([p[1] for p in parts]),
        w_indep=np.concatenate([p[2] for p in parts]),
        scenario=np.concatenate([p[3] for p in parts]),
        horizon=horizon,
    )
    if config.record_paths:
        sample.record_times = rec_times
        sample.record_firm = np.vstack([r[1][0] for r in results])
        sample.record_indep = np.vstack([r[1][1] for r in results])
        sample.record_default = np.concatenate([r[1][2] for r in results])
    return sample


# ---------------------------------------------------------------------------
# Valuation
# ---------------------------------------------------------------------------


class _NpvCoefficients:
    """Affine decomposition ``NPV(tau) = K * (base + X * slope - S_tau)``.

    The dividend strip and the forward value of the final share delivery
    combine to ``S_tau``: ``S_tau (1 - e^{-Q}) + S_tau e^{-Q} = S_tau``.
    """

    def __init__(self, contract: ErsContract, discount: DiscountCurve):
        sched = contract.schedule
        self.contract = contract
        self.discount = discount
        self.dates = np.asarray(sched.dates)
        self.starts = np.asarray(sched.period_starts)
        self.alpha = np.asarray(sched.accruals)
        self.p_pay = discount.discount(self.dates)
        p_start = discount.discount(self.starts)
        self.fixing = (p_start / self.p_pay - 1.0) / self.alpha
        n = len(self.dates)
        # Tail sums over i >= idx of P(0, T_i) alpha_i (L_i) and of P(0, T_i) alpha_i.
        self.tail_float = np.concatenate((np.cumsum((self.p_pay * self.alpha * self.fixing)[::-1])[::-1], [0.0]))
        self.tail_annuity = np.concatenate((np.cumsum((self.p_pay * self.alpha)[::-1])[::-1], [0.0]))
        self.n = n

    def parts(self, tau: np.ndarray):
        """Per-share (base, slope) so that ``NPV / K = S0 * (base + X * slope) - S_tau``."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau > self.dates[-1] + 1e-12):
            raise InputError("default time beyond swap maturity")
        p_tau = self.discount.discount(tau)
        idx = np.searchsorted(self.dates, tau, side="right")
        float_sum = self.tail_float[idx]
        if self.contract.stub_fixing == "at_default":
            live = idx < self.n
            k = np.minimum(idx, self.n - 1)
            fix_from = np.maximum(tau, self.starts[k])
            span = self.dates[k] - fix_from
            with np.errstate(divide="ignore", invalid="ignore"):
                stub_rate = np.where(span > 0.0,
                                     (self.discount.discount(fix_from) / self.p_pay[k] - 1.0) / span,
                                     self.fixing[k])
            adj = self.p_pay[k] * self.alpha[k] * (stub_rate - self.fixing[k])
            float_sum = float_sum + np.where(live, adj, 0.0)
        terminal = self.p_pay[-1]
        base = (float_sum + terminal) / p_tau
        slope = self.tail_annuity[idx] * BPS / p_tau
        return base, slope, p_tau

    def riskless_annuity(self) -> float:
        return float(self.tail_annuity[0])


def npv_at_default(contract: ErsContract, tau, s_tau, discount: DiscountCurve,
                   dividends: Optional[DividendCurve] = None) -> np.ndarray:
    """Residual swap value to the equity payer at the counterparty's default.

    ``-dividends + floating leg + (S0 P(tau, T_b) - E_tau[D(tau, T_b) S_T])``,
    all in closed form under deterministic rates and a lognormal equity.
    ``dividends`` only enters through ``S_tau`` and is accepted for symmetry.
    """
    coef = _NpvCoefficients(contract, discount)
    tau = np.asarray(tau, dtype=float)
    base, slope, _ = coef.parts(tau)
    out = contract.stock_count * (contract.s0 * (base + contract.spread_bps * slope) - np.asarray(s_tau))
    return out if out.ndim else float(out)


def npv_components(contract: ErsContract, tau: float, s_tau: float, discount: DiscountCurve,
                   dividends: DividendCurve) -> dict:
    """Unsimplified legs of :func:`npv_at_default` (per share) for inspection."""
    growth = float(dividends.growth(contract.maturity) / dividends.growth(tau))
    p_tb = float(discount.forward_discount(tau, contract.maturity))
    coef = _NpvCoefficients(contract, discount)
    base, slope, _ = coef.parts(np.array([tau]))
    floating = contract.s0 * (float(base[0]) - p_tb + contract.spread_bps * float(slope[0]))
    return {
        "dividends": s_tau * (1.0 - growth),
        "floating": floating,
        "terminal": contract.s0 * p_tb - s_tau * growth,
    }


def _estimate(contract: ErsContract, sample: DefaultSample, equity: EquityDynamics, discount: DiscountCurve,
              rho: float, spread_bps: float, control_variate: bool, default_mean: float) -> McEstimate:
    coef = _NpvCoefficients(contract, discount)
    n = sample.paths
    mature = sample.tau <= contract.maturity
    tau = sample.tau[mature]
    s_tau = _equity(equity, discount, tau, sample.w_firm[mature], sample.w_indep[mature], rho)
    base, slope, p_tau = coef.parts(tau)
    npv = contract.stock_count * (contract.s0 * (base + spread_bps * slope) - s_tau)
    loss = contract.lgd * p_tau * np.maximum(npv, 0.0) / contract.stock_count
    riskless = contract.s0 * spread_bps * BPS * coef.riskless_annuity()
    # Per-path payoff y = riskless - loss (loss = 0 off default); c = default indicator.
    m = loss.size
    sum_l, sum_l2 = float(loss.sum()), float(loss @ loss)
    mean_y = riskless - sum_l / n
    var_y = (sum_l2 - sum_l * sum_l / n) / max(n - 1, 1)
    mean_c = m / n
    var_c = (m - m * m / n) / max(n - 1, 1)
    cov_yc = -(sum_l - sum_l * m / n) / max(n - 1, 1)
    plain_se = math.sqrt(max(var_y, 0.0) / n)
    beta_cv = 0.0
    value, se = mean_y, plain_se
    if control_variate and var_c > 0.0:
        beta_cv = cov_yc / var_c
        value = mean_y - beta_cv * (mean_c - default_mean)
        var_res = var_y - cov_yc * cov_yc / var_c
        se = math.sqrt(max(var_res, 0.0) / n)
    scale = 1.0 / BPS
    return McEstimate(value * scale, se * scale, n, beta_cv, mean_y * scale, plain_se * scale,
                      spread_bps, rho)


def _default_mean(scenarios: ScenarioSet, contract: ErsContract) -> float:
    return 1.0 - float(mixture_survival(scenarios, contract.maturity))


def ers_price(contract: ErsContract, scenarios: ScenarioSet, equity: EquityDynamics,
              discount: DiscountCurve, config: McConfig,
              sample: Optional[DefaultSample] = None) -> McEstimate:
    """``ERS(0) = K S0 X sum alpha_i P(0,T_i) - LGD E[1{tau<=T_b} D(0,tau) NPV(tau)^+]``.

    A prior ``sample`` (same scenarios, horizon and seed) can be reused to
    price several spreads or correlations with common random numbers.
    """
    if sample is None:
        sample = simulate_default_and_equity(scenarios, contract.maturity, config, contract.schedule.dates)
    return _estimate(contract, sample, equity, discount, config.rho, contract.spread_bps,
                     config.control_variate, _default_mean(scenarios, contract))


def fair_ers_spread(contract: ErsContract, scenarios: ScenarioSet, equity: EquityDynamics,
                    discount: DiscountCurve, config: McConfig, sample: Optional[DefaultSample] = None,
                    tolerance_bps: float = 0.05, max_spread_bps: float = 1.0e4) -> float:
    """Spread ``X`` (bps) at which the simulated swap price is zero.

    Every evaluation reuses the same simulated defaults, so the price is a
    deterministic, increasing function of ``X``.
    """
    if sample is None:
        sample = simulate_default_and_equity(scenarios, contract.maturity, config, contract.schedule.dates)
    mean_c = _default_mean(scenarios, contract)

    def price(x: float) -> float:
        return _estimate(contract, sample, equity, discount, config.rho, x,
                         config.control_variate, mean_c).value

    p0 = price(0.0)
    if p0 >= -tolerance_bps:
        return 0.0
    hi = 10.0
    while price(hi) <= 0.0:
        hi *= 2.0
        if hi > max_spread_bps:
            raise NonConvergenceError(f"no fair spread below {max_spread_bps} bps")
    # Secant steps with bracket safeguarding.
    x = brentq(price, 0.0, hi, xtol=1e-10, maxiter=200)
    if abs(price(x)) > tolerance_bps:
        raise NonConvergenceError(f"fair spread search ended at {x} bps with price {price(x)} bps")
    return float(x)

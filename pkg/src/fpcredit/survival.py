"""Closed-form AT1P survival probabilities and scenario mixtures.

The firm value follows a lognormal diffusion with piecewise-constant
volatility and the default barrier is the curved safety level

    H_hat(t) = H * exp(-int_0^t (q - r + (1 + 2 beta) sigma^2 / 2) ds),

under which ``log(V / H_hat)`` is a Brownian motion with drift ``beta`` in
integrated-variance time. First passage below zero is then analytic in
``H / V0``, ``beta`` and the integrated variance only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, Union

import numpy as np
from scipy.special import ndtr

from fpcredit.errors import InputError
from fpcredit.marketdata import DiscountCurve, DividendCurve

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class FirmDynamics:
    """Firm-value parameters for one scenario, normalised by ``V0``.

    Parameters
    ----------
    h_ratio : float
        Barrier reference level ``H / V0``, strictly inside ``(0, 1)``.
    beta : float
        Barrier shape parameter.
    vol : sequence of (breakpoint, sigma)
        Piecewise-constant volatility: ``sigma_k`` applies on
        ``(breakpoint_{k-1}, breakpoint_k]`` with an implicit first start at 0;
        the last ``sigma`` is held flat beyond the last breakpoint.
    """

    h_ratio: float
    beta: float
    vol: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        vol = tuple((float(t), float(s)) for t, s in self.vol)
        if not 0.0 < self.h_ratio < 1.0:
            raise InputError(f"h_ratio must lie in (0, 1), got {self.h_ratio}")
        if not vol:
            raise InputError("volatility needs at least one segment")
        if any(s <= 0.0 for _, s in vol):
            raise InputError("volatilities must be positive")
        times = [t for t, _ in vol]
        if times[0] <= 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("volatility breakpoints must be positive and strictly increasing")
        object.__setattr__(self, "vol", vol)
        object.__setattr__(self, "h_ratio", float(self.h_ratio))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def constant(cls, h_ratio: float, beta: float, sigma: float) -> "FirmDynamics":
        return cls(h_ratio, beta, ((1.0, sigma),))

    @classmethod
    def piecewise(cls, h_ratio: float, beta: float, breakpoints: Sequence[float],
                  sigmas: Sequence[float]) -> "FirmDynamics":
        if len(breakpoints) != len(sigmas):
            raise InputError("breakpoints and sigmas must have equal length")
        return cls(h_ratio, beta, tuple(zip(breakpoints, sigmas)))

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([t for t, _ in self.vol])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s for _, s in self.vol])

    def sigma_at(self, t):
        """Volatility in force on the segment containing ``t`` (right-continuous at 0)."""
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float), side="left")
        return self.sigmas[np.minimum(idx, len(self.vol) - 1)]

    def integrated_variance(self, t):
        return integrated_variance(self, t)

    def survival(self, t):
        return survival_probability(self, t)

    def with_sigmas(self, sigmas: Sequence[float]) -> "FirmDynamics":
        return FirmDynamics(self.h_ratio, self.beta, tuple(zip(self.breakpoints, sigmas)))


def integrated_variance(firm: FirmDynamics, T):
    """``int_0^T sigma(s)^2 ds``, exact on the constant segments."""
    T_arr = np.asarray(T, dtype=float)
    if np.any(T_arr < 0.0):
        raise InputError("time must be non-negative")
    ends = firm.breakpoints
    starts = np.concatenate(([0.0], ends[:-1]))
    var = firm.sigmas ** 2
    # Last segment extends to infinity.
    ends = ends.copy()
    ends[-1] = np.inf
    lengths = np.clip(T_arr[..., None] - starts, 0.0, ends - starts)
    out = lengths @ var
    return out if out.ndim else float(out)


def _first_passage_survival(h: float, beta: float, var) -> np.ndarray:
    var = np.asarray(var, dtype=float)
    out = np.ones_like(var)
    pos = var > 0.0
    sd = np.sqrt(var[pos])
    log_h = np.log(h)
    drift = beta * var[pos]
    out[pos] = ndtr((-log_h + drift) / sd) - h ** (2.0 * beta) * ndtr((log_h + drift) / sd)
    return np.clip(out, 0.0, 1.0)


def survival_probability(firm: FirmDynamics, T):
    """AT1P survival probability ``Q(tau > T)``.

    Equals 1 at ``T = 0`` (zero integrated variance). Accepts scalars or arrays.
    """
    var = integrated_variance(firm, T)
    out = _first_passage_survival(firm.h_ratio, firm.beta, var)
    return out if np.ndim(T) else float(out)


def barrier_level(firm: FirmDynamics, discount: DiscountCurve, dividends: DividendCurve, t):
    """Safety barrier ``H_hat(t) / V0``."""
    exponent = (
        dividends.integral(t)
        - discount.integral(t)
        + 0.5 * (1.0 + 2.0 * firm.beta) * integrated_variance(firm, t)
    )
    return firm.h_ratio * np.exp(-exponent)


@dataclass(frozen=True)
class ScenarioSet:
    """Discrete scenarios on ``(H, sigma)`` with their probabilities."""

    scenarios: tuple[tuple[FirmDynamics, float], ...]

    def __post_init__(self) -> None:
        scen = tuple((f, float(p)) for f, p in self.scenarios)
        if not scen:
            raise InputError("scenario set needs at least one scenario")
        probs = np.array([p for _, p in scen])
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise InputError("scenario probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise InputError(f"scenario probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "scenarios", scen)

    @classmethod
    def from_arrays(cls, h_ratios: Sequence[float], sigmas: Sequence[float],
                    probabilities: Sequence[float], beta: float) -> "ScenarioSet":
        if not len(h_ratios) == len(sigmas) == len(probabilities):
            raise InputError("scenario arrays must have equal length")
        probs = np.asarray(probabilities, dtype=float)
        return cls(tuple(
            (FirmDynamics.constant(h, beta, s), p)
            for h, s, p in zip(h_ratios, sigmas, probs)
        ))

    @classmethod
    def single(cls, firm: FirmDynamics) -> "ScenarioSet":
        return cls(((firm, 1.0),))

    def __len__(self) -> int:
        return len(self.scenarios)

    @property
    def firms(self) -> list[FirmDynamics]:
        return [f for f, _ in self.scenarios]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.scenarios])

    @property
    def h_ratios(self) -> np.ndarray:
        return np.array([f.h_ratio for f, _ in self.scenarios])

    @property
    def expected_barrier(self) -> float:
        return float(self.probabilities @ self.h_ratios)

    def survival(self, t):
        return mixture_survival(self, t)


def mixture_survival(scenarios: ScenarioSet, T):
    """``sum_i p_i Q_i(tau > T)`` over the scenario set."""
    total = sum(p * np.asarray(survival_probability(f, T)) for f, p in scenarios.scenarios)
    return total if np.ndim(T) else float(total)


class SurvivalSource(Protocol):
    def survival(self, t): ...


@dataclass(frozen=True)
class SurvivalCurve:
    """Survival function ``t -> Q(tau > t)`` plus a sampling grid.

    ``step`` records the grid spacing; pricers refuse curves sampled coarser
    than monthly.
    """

    evaluator: Callable
    times: np.ndarray
    values: np.ndarray
    step: float

    def __call__(self, t):
        return self.evaluator(t)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def from_source(cls, source: SurvivalSource, horizon: float, step: float = 1.0 / 52.0):
        return survival_grid(source, horizon, step)


def survival_grid(source: Union[SurvivalSource, FirmDynamics, ScenarioSet], horizon: float,
                  step: float = 1.0 / 52.0) -> SurvivalCurve:
    """Sample ``source.survival`` at ``0, step, 2 step, ..., horizon``."""
    if step <= 0.0:
        raise InputError("step must be positive")
    if horizon < step:
        raise InputError("horizon must be at least one step")
    n = int(np.floor(horizon / step + 1e-9))
    times = np.arange(n + 1) * step
    if horizon - times[-1] > 1e-12:
        times = np.append(times, horizon)
    else:
        times[-1] = horizon
    values = np.asarray(source.survival(times), dtype=float)
    return SurvivalCurve(source.survival, times, values, float(step))

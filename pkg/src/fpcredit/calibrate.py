"""CDS calibration of AT1P and its scenario extensions.

Three procedures are provided:

* ``calibrate_at1p_cascade`` backs out a piecewise-constant volatility one
  maturity at a time (nested: appending a longer quote never moves earlier
  segments).
* ``sbat1p_kernel_calibrate`` fixes all barriers but one and solves for the
  free barrier that makes the scenario CDS matrix singular; the probability
  vector is the normalised null-space direction.
* ``sbat1p_optimize`` / ``svbat1p_optimize`` minimise the (weighted) sum of
  squared mixture CDS values over barriers, probabilities and optionally
  volatilities with a multistart Nelder-Mead search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import expit, logit, ndtr
from scipy.stats import qmc

from fpcredit.cdspricer import DEFAULT_STEP, CdsGrid
from fpcredit.errors import CalibrationError, InputError
from fpcredit.intensity import strip_hazard
from fpcredit.marketdata import BPS, CdsQuote, DiscountCurve
from fpcredit.survival import FirmDynamics, ScenarioSet

Parameters = Union[FirmDynamics, ScenarioSet]

H_BOUNDS = (0.01, 0.99)
SIGMA_BOUNDS = (0.01, 1.0)
CASCADE_SIGMA_BRACKET = (0.001, 3.0)
MERGE_TOL = 1e-3


class QuoteBook:
    """CDS quotes with their integration grids on one shared time axis."""

    def __init__(self, quotes: Sequence[CdsQuote], discount: DiscountCurve, step: float = DEFAULT_STEP):
        if not quotes:
            raise InputError("no quotes supplied")
        self.quotes = list(quotes)
        self.discount = discount
        self.grids = [CdsGrid(q.schedule(), discount, step) for q in self.quotes]
        all_times = np.unique(np.concatenate([g.times for g in self.grids]))
        self.times = all_times
        self.index = [np.searchsorted(all_times, g.times) for g in self.grids]
        self.mid = np.array([q.r_mid for q in self.quotes])
        self.lgd = np.array([q.lgd for q in self.quotes])
        # Each CDS value is linear in the survival vector.
        self.annuity = np.zeros((len(all_times), len(self.quotes)))
        self.protection = np.zeros_like(self.annuity)
        for k, (grid, idx) in enumerate(zip(self.grids, self.index)):
            ann, prot = grid.coefficients()
            np.add.at(self.annuity[:, k], idx, ann)
            np.add.at(self.protection[:, k], idx, prot)
        self._mid_map = self.protection * (self.lgd / BPS) - self.annuity * self.mid
        self._positive = all_times > 0.0

    def __len__(self) -> int:
        return len(self.quotes)

    def pv_from_survival(self, q: np.ndarray, rates: Optional[Sequence[float]] = None) -> np.ndarray:
        """Buyer PVs (bps), shape ``q.shape[:-1] + (n_quotes,)``.

        ``q`` holds survival values on ``self.times``.
        """
        if rates is None:
            return q @ self._mid_map
        rates = np.asarray(rates, dtype=float)
        return (q @ self.protection) * (self.lgd / BPS) - (q @ self.annuity) * rates

    def constant_vol_pvs(self, h, sigma, beta: float) -> np.ndarray:
        """PV matrix ``[scenario, quote]`` for constant-volatility scenarios."""
        h = np.atleast_1d(np.asarray(h, dtype=float))[:, None]
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), h.shape[:1])[:, None]
        t = self.times[self._positive]
        var = sigma ** 2 * t
        sd = sigma * np.sqrt(t)
        log_h = np.log(h)
        drift = beta * var
        q = np.ones((h.shape[0], len(self.times)))
        q[:, self._positive] = np.clip(
            ndtr((drift - log_h) / sd) - h ** (2.0 * beta) * ndtr((log_h + drift) / sd), 0.0, 1.0
        )
        return q @ self._mid_map

    def firm_pvs(self, firm: FirmDynamics) -> np.ndarray:
        return self.pv_from_survival(firm.survival(self.times))

    def scenario_pvs(self, scenarios: ScenarioSet) -> np.ndarray:
        """Scenario-wise PVs ``[scenario, quote]``."""
        return np.stack([self.firm_pvs(f) for f in scenarios.firms])


def bid_ask_weights(quotes: Sequence[CdsQuote]) -> np.ndarray:
    """Weights inversely proportional to each quote's bid-ask spread."""
    spreads = np.array([q.bid_ask for q in quotes])
    if np.any(spreads <= 0.0):
        raise InputError("bid-ask weights need strictly positive bid-ask spreads")
    return 1.0 / spreads


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class OptimizerConfig:
    multistart_count: int = 16
    max_iterations: int = 4000
    tolerance: float = 1e-12
    restarts: int = 3
    seed: int = 20040310


@dataclass
class CalibrationConfig:
    """Model choice and settings consumed by :func:`calibrate`.

    ``fixed_h`` switches SBAT1P to the kernel procedure; ``common_sigma=None``
    frees the common SBAT1P volatility.
    """

    model: str = "at1p"
    beta: float = 0.5
    h_ratio: float = 0.4
    fixed_h: Optional[tuple[float, ...]] = None
    scenario_count: int = 2
    common_sigma: Optional[float] = 0.24
    weights: Optional[tuple[float, ...]] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    h_bounds: tuple[float, float] = H_BOUNDS
    sigma_bounds: tuple[float, float] = SIGMA_BOUNDS

    def __post_init__(self) -> None:
        if self.model not in ("at1p", "sbat1p", "svbat1p"):
            raise InputError(f"unknown model {self.model!r}")
        if self.scenario_count < 1:
            raise InputError("scenario_count must be >= 1")
        if self.weights is not None and any(w <= 0.0 for w in self.weights):
            raise InputError("weights must be positive")
        for lo, hi in (self.h_bounds, self.sigma_bounds):
            if not 0.0 < lo < hi:
                raise InputError("bounds must satisfy 0 < lo < hi")


@dataclass
class CalibrationReport:
    """Calibrated parameters with per-quote diagnostics (PVs in bps)."""

    model: str
    parameters: Parameters
    objective: float
    objective_unweighted: float
    residuals: np.ndarray
    in_window: np.ndarray
    windows: np.ndarray
    expected_barrier: float
    converged: bool = True
    weights: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)
    trace: list = field(default_factory=list, repr=False)

    @property
    def scenarios(self) -> ScenarioSet:
        p = self.parameters
        return p if isinstance(p, ScenarioSet) else ScenarioSet.single(p)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": parameters_to_dict(self.parameters),
            "objective_bps2": self.objective,
            "objective_unweighted_bps2": self.objective_unweighted,
            "residuals_bps": [float(x) for x in self.residuals],
            "in_bid_ask_window": [bool(x) for x in self.in_window],
            "pv_windows_bps": [[float(lo), float(hi)] for lo, hi in self.windows],
            "expected_barrier": self.expected_barrier,
            "merged_scenarios": parameters_to_dict(merge_scenarios(self.scenarios))["scenarios"],
            "converged": bool(self.converged),
            "weights": None if self.weights is None else [float(w) for w in self.weights],
            "config": self.config,
        }


def parameters_to_dict(params: Parameters) -> dict:
    scen = params if isinstance(params, ScenarioSet) else ScenarioSet.single(params)
    return {
        "beta": scen.firms[0].beta,
        "scenarios": [
            {"h_ratio": f.h_ratio, "probability": p, "vol": [[t, s] for t, s in f.vol]}
            for f, p in scen.scenarios
        ],
    }


def scenarios_from_dict(data: dict) -> ScenarioSet:
    """Inverse of :func:`parameters_to_dict`; also accepts a full report dict."""
    if "parameters" in data:
        data = data["parameters"]
    try:
        beta = float(data["beta"])
        items = data["scenarios"]
        scen = []
        for item in items:
            vol = tuple((float(t), float(s)) for t, s in item["vol"])
            scen.append((FirmDynamics(float(item["h_ratio"]), beta, vol), float(item["probability"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed parameter set: {exc}") from None
    probs = np.array([p for _, p in scen])
    if probs.size and abs(probs.sum() - 1.0) < 1e-9:
        # Absorb serialisation rounding into the largest weight.
        k = int(np.argmax(probs))
        probs[k] += 1.0 - probs.sum()
        scen = [(f, float(p)) for (f, _), p in zip(scen, probs)]
    return ScenarioSet(tuple(scen))


def merge_scenarios(scenarios: ScenarioSet, tol: float = MERGE_TOL) -> ScenarioSet:
    """Merge scenarios whose barriers and volatility paths agree within ``tol``."""
    merged: list[list] = []
    for firm, p in scenarios.scenarios:
        for entry in merged:
            other = entry[0]
            if (abs(other.h_ratio - firm.h_ratio) < tol and len(other.vol) == len(firm.vol)
                    and np.all(np.abs(other.sigmas - firm.sigmas) < tol)):
                entry[1] += p
                break
        else:
            merged.append([firm, p])
    probs = np.array([p for _, p in merged])
    probs = probs / probs.sum()
    return ScenarioSet(tuple((f, float(p)) for (f, _), p in zip(merged, probs)))


def pv_windows(quotes: Sequence[CdsQuote], discount: DiscountCurve,
               step: float = DEFAULT_STEP) -> np.ndarray:
    """Bid/ask PV windows ``[ask_pv, bid_pv]`` under the hazard curve stripped from mids."""
    hazard = strip_hazard(quotes, discount, step)
    book = QuoteBook(quotes, discount, step)
    q = hazard.survival(book.times)
    bid = book.pv_from_survival(q, [qq.r_bid for qq in quotes])
    ask = book.pv_from_survival(q, [qq.r_ask for qq in quotes])
    return np.stack([ask, bid], axis=-1)


def residual_report(parameters: Parameters, quotes: Sequence[CdsQuote], discount: DiscountCurve,
                    weights: Optional[Sequence[float]] = None, model: str = "custom",
                    step: float = DEFAULT_STEP, converged: bool = True,
                    config: Optional[dict] = None) -> CalibrationReport:
    """Mixture CDS values at mid rates and bid/ask window flags for given parameters."""
    book = QuoteBook(quotes, discount, step)
    scen = parameters if isinstance(parameters, ScenarioSet) else ScenarioSet.single(parameters)
    residuals = scen.probabilities @ book.scenario_pvs(scen)
    windows = pv_windows(quotes, discount, step)
    in_window = (residuals >= windows[:, 0]) & (residuals <= windows[:, 1])
    w = None if weights is None else np.asarray(weights, dtype=float)
    unweighted = float(residuals @ residuals)
    weighted = unweighted if w is None else float(w @ residuals ** 2)
    return CalibrationReport(
        model=model,
        parameters=parameters,
        objective=weighted,
        objective_unweighted=unweighted,
        residuals=residuals,
        in_window=in_window,
        windows=windows,
        expected_barrier=scen.expected_barrier,
        converged=converged,
        weights=w,
        config=config or {},
    )


# ---------------------------------------------------------------------------
# AT1P cascade
# ---------------------------------------------------------------------------


def calibrate_at1p_cascade(quotes: Sequence[CdsQuote], h_ratio: float, beta: float,
                           discount: DiscountCurve, step: float = DEFAULT_STEP) -> FirmDynamics:
    """Piecewise-constant volatility reproducing every mid quote exactly.

    Segment ``k`` covers ``(T_{k-1}, T_k]``; each segment is solved with all
    earlier ones frozen.
    """
    if not 0.0 < h_ratio < 1.0:
        raise InputError(f"h_ratio must lie in (0, 1), got {h_ratio}")
    if not quotes:
        raise InputError("no quotes supplied")
    tenors = [q.tenor for q in quotes]
    if any(b <= a for a, b in zip(tenors, tenors[1:])):
        raise InputError("quotes must be sorted by strictly increasing tenor")
    sigmas: list[float] = []
    lo, hi = CASCADE_SIGMA_BRACKET
    for k, quote in enumerate(quotes):
        grid = CdsGrid(quote.schedule(), discount, step)
        breakpoints = tenors[: k + 1]

        def pv(sigma: float) -> float:
            firm = FirmDynamics.piecewise(h_ratio, beta, breakpoints, sigmas + [sigma])
            return float(grid.pv(firm.survival(grid.times), quote.r_mid, quote.lgd))

        f_lo, f_hi = pv(lo), pv(hi)
        if np.sign(f_lo) == np.sign(f_hi):
            raise CalibrationError(
                f"AT1P cascade: no volatility in ({lo:.1%}, {hi:.0%}) reprices the {quote.tenor}y quote "
                f"({quote.r_mid} bps) given earlier segments"
            )
        sigmas.append(brentq(pv, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=300))
    return FirmDynamics.piecewise(h_ratio, beta, tenors, sigmas)


# ---------------------------------------------------------------------------
# SBAT1P kernel calibration
# ---------------------------------------------------------------------------


@dataclass
class KernelResult:
    """Outcome of the vanishing-determinant calibration."""

    free_barrier: float
    barriers: np.ndarray
    probabilities: np.ndarray
    matrix: np.ndarray
    sigma: float
    beta: float
    free_index: int

    @property
    def scenarios(self) -> ScenarioSet:
        return ScenarioSet.from_arrays(self.barriers, [self.sigma] * len(self.barriers),
                                       self.probabilities, self.beta)

    @property
    def expected_barrier(self) -> float:
        return float(self.probabilities @ self.barriers)

    @property
    def kernel_residual(self) -> float:
        """``||C p|| / ||C||``."""
        return float(np.linalg.norm(self.matrix @ self.probabilities) / np.linalg.norm(self.matrix))


def _lu_det(a: np.ndarray) -> float:
    # numpy's det factors with LAPACK getrf (LU, partial pivoting).
    return float(np.linalg.det(a))


def _null_probabilities(c: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(c)
    v = vt[-1]
    total = v.sum()
    if abs(total) < 1e-14:
        raise CalibrationError("null-space vector sums to zero; cannot normalise to probabilities")
    return v / total


def sbat1p_kernel_calibrate(quotes: Sequence[CdsQuote], fixed_barriers: Sequence[float],
                            common_sigma: float, beta: float, discount: DiscountCurve,
                            bracket: tuple[float, float] = (0.05, 0.95), exclusion: float = 0.01,
                            scan_points: int = 361, step: float = DEFAULT_STEP) -> KernelResult:
    """Solve ``det(C(H_free)) = 0`` and take the null vector of ``C`` as probabilities.

    ``C[k, i]`` is the buyer PV at the mid rate of quote ``k`` when the barrier
    is ``H_i`` and the volatility ``common_sigma``. All sign changes of the
    determinant inside ``bracket`` (away from the fixed barriers) are solved;
    the first root with an admissible probability vector is returned.
    """
    n = len(quotes)
    fixed = [float(h) for h in fixed_barriers]
    if len(fixed) != n - 1:
        raise InputError(f"need {n - 1} fixed barriers for {n} quotes, got {len(fixed)}")
    if len(set(fixed)) != len(fixed) or any(not 0.0 < h < 1.0 for h in fixed):
        raise InputError("fixed barriers must be distinct and inside (0, 1)")
    book = QuoteBook(quotes, discount, step)
    fixed_cols = book.constant_vol_pvs(np.array(fixed), common_sigma, beta).T if fixed else np.empty((n, 0))

    def matrix(h_free: float) -> np.ndarray:
        col = book.constant_vol_pvs(np.array([h_free]), common_sigma, beta).T
        return np.hstack([col, fixed_cols])

    def det(h_free: float) -> float:
        return _lu_det(matrix(h_free))

    grid = np.linspace(bracket[0], bracket[1], scan_points)
    mask = np.ones_like(grid, dtype=bool)
    for h in fixed:
        mask &= np.abs(grid - h) > exclusion
    roots = []
    values = [det(h) if ok else math.nan for h, ok in zip(grid, mask)]
    for a, b, fa, fb, ok_a, ok_b in zip(grid, grid[1:], values, values[1:], mask, mask[1:]):
        if not (ok_a and ok_b):
            continue
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(brentq(det, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
    if not roots:
        raise CalibrationError(
            f"no admissible barrier: det(C) does not change sign on {bracket} for fixed barriers {fixed}"
        )
    rejected = []
    for h_free in roots:
        c = matrix(h_free)
        p = _null_probabilities(c)
        if np.any(p < -1e-10) or np.any(p > 1.0 + 1e-10):
            rejected.append((h_free, p))
            continue
        p = np.clip(p, 0.0, None)
        p = p / p.sum()
        barriers = np.array([h_free] + fixed)
        order = np.argsort(barriers, kind="stable")
        return KernelResult(
            free_barrier=float(h_free),
            barriers=barriers[order],
            probabilities=p[order],
            matrix=c[:, order],
            sigma=float(common_sigma),
            beta=float(beta),
            free_index=int(np.flatnonzero(order == 0)[0]),
        )
    detail = "; ".join(f"H={h:.4f} p={np.round(p, 4).tolist()}" for h, p in rejected)
    raise CalibrationError(f"negative probability in every null vector: {detail}")


# ---------------------------------------------------------------------------
# Scenario optimisation
# ---------------------------------------------------------------------------


class _Layout:
    """Maps an unconstrained vector to (barriers, volatilities, probabilities)."""

    def __init__(self, n: int, vol_mode: str, common_sigma: Optional[float],
                 h_bounds: tuple[float, float], sigma_bounds: tuple[float, float]):
        self.n = n
        self.vol_mode = vol_mode  # "fixed" | "common" | "scenario"
        self.common_sigma = common_sigma
        self.h_bounds = h_bounds
        self.sigma_bounds = sigma_bounds
        self.n_sigma = {"fixed": 0, "common": 1, "scenario": n}[vol_mode]
        self.dim = n + self.n_sigma + (n - 1)

    @staticmethod
    def _squash(x, bounds):
        lo, hi = bounds
        return lo + (hi - lo) * expit(x)

    @staticmethod
    def _unsquash(y, bounds):
        lo, hi = bounds
        u = np.clip((np.asarray(y) - lo) / (hi - lo), 1e-9, 1 - 1e-9)
        return logit(u)

    def decode(self, x: np.ndarray):
        n = self.n
        h = self._squash(x[:n], self.h_bounds)
        if self.vol_mode == "fixed":
            sigma = np.full(n, self.common_sigma)
        elif self.vol_mode == "common":
            sigma = np.full(n, self._squash(x[n], self.sigma_bounds))
        else:
            sigma = self._squash(x[n:2 * n], self.sigma_bounds)
        logits = np.concatenate((x[n + self.n_sigma:], [0.0]))
        logits = logits - logits.max()
        w = np.exp(logits)
        return h, sigma, w / w.sum()

    def encode_unit(self, u: np.ndarray) -> np.ndarray:
        """Map a point of the unit cube to the unconstrained space."""
        n = self.n
        lo, hi = self.h_bounds
        parts = [self._unsquash(lo + (hi - lo) * u[:n], self.h_bounds)]
        if self.n_sigma:
            lo, hi = self.sigma_bounds
            parts.append(self._unsquash(lo + (hi - lo) * u[n:n + self.n_sigma], self.sigma_bounds))
        # Probability logits relative to the last scenario, spread over [-4, 4].
        parts.append(8.0 * u[n + self.n_sigma:] - 4.0)
        return np.concatenate(parts)


def _objective_factory(book: QuoteBook, layout: _Layout, beta: float, weights: Optional[np.ndarray]):
    w = np.ones(len(book)) if weights is None else weights

    def objective(x: np.ndarray) -> float:
        h, sigma, p = layout.decode(x)
        resid = p @ book.constant_vol_pvs(h, sigma, beta)
        val = float(w @ resid ** 2)
        return val if math.isfinite(val) else 1e30

    return objective


def _multistart(objective, layout: _Layout, cfg: OptimizerConfig):
    sobol = qmc.Sobol(layout.dim, scramble=True, seed=cfg.seed)
    starts = sobol.random(cfg.multistart_count)
    best = None
    for k, u in enumerate(starts):
        x0 = layout.encode_unit(u)
        f0 = objective(x0)
        trace: list[float] = []

        def record(xk, _trace=trace):
            _trace.append(objective(xk))

        x, fx, ok = x0, f0, False
        for _ in range(cfg.restarts + 1):
            res = minimize(
                objective, x, method="Nelder-Mead", callback=record,
                options={"maxiter": cfg.max_iterations, "maxfev": 4 * cfg.max_iterations,
                         "xatol": 1e-8, "fatol": cfg.tolerance, "adaptive": layout.dim > 3},
            )
            improved = res.fun < fx - cfg.tolerance
            if res.fun <= fx:
                x, fx = res.x, float(res.fun)
            ok = bool(res.success)
            if not improved:
                break
        candidate = (fx, k, x, ok, f0, trace)
        if best is None or fx < best[0]:
            best = candidate
    fx, k, x, ok, f0, trace = best
    return x, fx, ok, trace


def _optimize(quotes: Sequence[CdsQuote], discount: DiscountCurve, layout: _Layout, beta: float,
              weights: Optional[Sequence[float]], cfg: OptimizerConfig, model: str,
              config_echo: dict, step: float) -> CalibrationReport:
    book = QuoteBook(quotes, discount, step)
    w = None if weights is None else np.asarray(weights, dtype=float)
    if w is not None and (w.shape != (len(book),) or np.any(w <= 0.0)):
        raise InputError("weights must be positive, one per quote")
    objective = _objective_factory(book, layout, beta, w)
    x, fx, ok, trace = _multistart(objective, layout, cfg)
    h, sigma, p = layout.decode(x)
    scen = ScenarioSet.from_arrays(h, sigma, p / p.sum(), beta)
    report = residual_report(scen, quotes, discount, weights=w, model=model, step=step,
                             converged=ok, config=config_echo)
    report.trace = trace
    return report


def sbat1p_optimize(quotes: Sequence[CdsQuote], scenario_count: int, beta: float,
                    discount: DiscountCurve, common_sigma: Optional[float] = 0.24,
                    weights: Optional[Sequence[float]] = None,
                    optimizer: Optional[OptimizerConfig] = None,
                    step: float = DEFAULT_STEP, h_bounds: tuple[float, float] = H_BOUNDS,
                    sigma_bounds: tuple[float, float] = SIGMA_BOUNDS) -> CalibrationReport:
    """Barrier-scenario fit with a common volatility (free when ``common_sigma`` is None)."""
    cfg = optimizer or OptimizerConfig()
    mode = "common" if common_sigma is None else "fixed"
    layout = _Layout(scenario_count, mode, common_sigma, h_bounds, sigma_bounds)
    echo = {"model": "sbat1p", "scenario_count": scenario_count, "beta": beta,
            "common_sigma": common_sigma, "optimizer": vars(cfg).copy(),
            "weights": None if weights is None else [float(v) for v in weights]}
    return _optimize(quotes, discount, layout, beta, weights, cfg, "sbat1p", echo, step)


def svbat1p_optimize(quotes: Sequence[CdsQuote], beta: float, discount: DiscountCurve,
                     scenario_count: int = 2, weights: Optional[Sequence[float]] = None,
                     optimizer: Optional[OptimizerConfig] = None,
                     step: float = DEFAULT_STEP, h_bounds: tuple[float, float] = H_BOUNDS,
                     sigma_bounds: tuple[float, float] = SIGMA_BOUNDS) -> CalibrationReport:
    """Joint barrier/volatility scenario fit with per-scenario constant volatilities."""
    cfg = optimizer or OptimizerConfig()
    layout = _Layout(scenario_count, "scenario", None, h_bounds, sigma_bounds)
    echo = {"model": "svbat1p", "scenario_count": scenario_count, "beta": beta,
            "optimizer": vars(cfg).copy(),
            "weights": None if weights is None else [float(v) for v in weights]}
    return _optimize(quotes, discount, layout, beta, weights, cfg, "svbat1p", echo, step)


def at1p_report(quotes: Sequence[CdsQuote], h_ratio: float, beta: float, discount: DiscountCurve,
                step: float = DEFAULT_STEP) -> CalibrationReport:
    firm = calibrate_at1p_cascade(quotes, h_ratio, beta, discount, step)
    return residual_report(firm, quotes, discount, model="at1p", step=step,
                           config={"model": "at1p", "h_ratio": h_ratio, "beta": beta})


def calibrate(quotes: Sequence[CdsQuote], discount: DiscountCurve, config: CalibrationConfig,
              step: float = DEFAULT_STEP) -> CalibrationReport:
    """Run the procedure selected by ``config`` and return its report."""
    c = config
    if c.model == "at1p":
        return at1p_report(quotes, c.h_ratio, c.beta, discount, step)
    if c.model == "sbat1p" and c.fixed_h:
        if c.common_sigma is None:
            raise InputError("kernel calibration needs a common volatility")
        kernel = sbat1p_kernel_calibrate(quotes, c.fixed_h, c.common_sigma, c.beta, discount, step=step)
        echo = {"model": "sbat1p", "method": "kernel", "beta": c.beta, "common_sigma": c.common_sigma,
                "fixed_h": list(c.fixed_h)}
        return residual_report(kernel.scenarios, quotes, discount, weights=c.weights, model="sbat1p",
                               step=step, config=echo)
    if c.model == "sbat1p":
        return sbat1p_optimize(quotes, c.scenario_count, c.beta, discount, common_sigma=c.common_sigma,
                               weights=c.weights, optimizer=c.optimizer, step=step,
                               h_bounds=c.h_bounds, sigma_bounds=c.sigma_bounds)
    return svbat1p_optimize(quotes, c.beta, discount, scenario_count=c.scenario_count, weights=c.weights,
                            optimizer=c.optimizer, step=step, h_bounds=c.h_bounds,
                            sigma_bounds=c.sigma_bounds)

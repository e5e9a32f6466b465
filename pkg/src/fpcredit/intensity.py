"""Deterministic-intensity benchmark: piecewise-linear hazard stripped from CDS."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from fpcredit.cdspricer import DEFAULT_STEP, CdsGrid
from fpcredit.errors import CalibrationError, InputError
from fpcredit.marketdata import CdsQuote, DiscountCurve

HAZARD_BRACKET = (0.0, 10.0)


@dataclass(frozen=True)
class HazardCurve:
    """Hazard rate linear between nodes, flat before the first and after the last."""

    nodes: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        nodes = tuple((float(t), float(lam)) for t, lam in self.nodes)
        if not nodes:
            raise InputError("hazard curve needs at least one node")
        times = [t for t, _ in nodes]
        if times[0] < 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("hazard node times must be non-negative and strictly increasing")
        if any(lam < 0.0 for _, lam in nodes):
            raise InputError("intensities must be non-negative")
        object.__setattr__(self, "nodes", nodes)
        knot_t = np.array(times)
        knot_l = np.array([lam for _, lam in nodes])
        if knot_t[0] > 0.0:
            knot_t = np.concatenate(([0.0], knot_t))
            knot_l = np.concatenate(([knot_l[0]], knot_l))
        cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(knot_t) * (knot_l[1:] + knot_l[:-1]))))
        object.__setattr__(self, "_t", knot_t)
        object.__setattr__(self, "_l", knot_l)
        object.__setattr__(self, "_cum", cum)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.nodes])

    @property
    def intensities(self) -> np.ndarray:
        return np.array([lam for _, lam in self.nodes])

    def intensity(self, t):
        return np.interp(t, self._t, self._l)

    def integrated(self, t):
        """``int_0^t lambda(s) ds``, exact for the linear segments."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise InputError("time must be non-negative")
        k = np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, len(self._t) - 1)
        lam_t = self.intensity(t)
        out = self._cum[k] + 0.5 * (t - self._t[k]) * (self._l[k] + lam_t)
        return out if out.ndim else float(out)

    def survival(self, t):
        return hazard_survival(self, t)


def hazard_survival(curve: HazardCurve, t):
    """``exp(-int_0^t lambda)``."""
    out = np.exp(-np.asarray(curve.integrated(t)))
    return out if np.ndim(t) else float(out)


def strip_hazard(quotes: Sequence[CdsQuote], discount: DiscountCurve,
                 step: float = DEFAULT_STEP) -> HazardCurve:
    """Nested bootstrap of node intensities at the quoted maturities.

    Each node is solved so that the CDS at the mid rate has zero value, with
    all earlier nodes frozen.
    """
    if not quotes:
        raise InputError("no quotes to strip")
    tenors = [q.tenor for q in quotes]
    if any(b <= a for a, b in zip(tenors, tenors[1:])):
        raise InputError("quotes must be sorted by strictly increasing tenor")
    nodes: list[tuple[float, float]] = []
    for quote in quotes:
        grid = CdsGrid(quote.schedule(), discount, step)

        def pv(lam: float) -> float:
            curve = HazardCurve(tuple(nodes) + ((quote.tenor, lam),))
            return float(grid.pv(curve.survival(grid.times), quote.r_mid, quote.lgd))

        lo, hi = HAZARD_BRACKET
        f_lo, f_hi = pv(lo), pv(hi)
        if f_lo > 0.0 or f_hi < 0.0:
            raise CalibrationError(
                f"cannot strip {quote.tenor}y quote {quote.r_mid} bps: no intensity in [{lo}, {hi}] zeroes the CDS"
            )
        lam = lo if f_lo == 0.0 else brentq(pv, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        nodes.append((quote.tenor, lam))
    return HazardCurve(tuple(nodes))


def save_hazard(curve: HazardCurve, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("time_years", "intensity"))
        for t, lam in curve.nodes:
            writer.writerow((repr(t), repr(lam)))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcredit.cdspricer import CdsGrid
from fpcredit.errors import CalibrationError, InputError
from fpcredit.intensity import HazardCurve, hazard_survival, save_hazard, strip_hazard
from fpcredit.marketdata import CdsQuote, VODAFONE_QUOTES, flat_curve


def _pv(quote, curve, discount, rate=None):
    grid = CdsGrid(quote.schedule(), discount)
    return float(grid.pv(curve.survival(grid.times), quote.r_mid if rate is None else rate, quote.lgd))


def test_hazard_survival_examples():
    flat = HazardCurve(((1.0, 0.01),))
    assert hazard_survival(flat, 0.0) == 1.0
    assert hazard_survival(flat, 2.0) == pytest.approx(math.exp(-0.02), rel=1e-14)
    two = HazardCurve(((0.0, 0.00357), (1.0, 0.00357)))
    assert hazard_survival(two, 1.0) == pytest.approx(0.996436, abs=1e-6)


def test_integrated_hazard_trapezoid():
    curve = HazardCurve(((1.0, 0.01), (3.0, 0.03)))
    # 0.01 on [0,1], then linear to 0.03 at 3, flat after.
    assert curve.integrated(1.0) == pytest.approx(0.01)
    assert curve.integrated(2.0) == pytest.approx(0.01 + 0.5 * (0.01 + 0.02))
    assert curve.integrated(5.0) == pytest.approx(0.01 + 0.04 + 0.06)
    with pytest.raises(InputError):
        HazardCurve(((1.0, -0.01),))


def test_strip_vodafone(vod, flat3):
    curve = strip_hazard(vod, flat3)
    lam1 = curve.intensities[0]
    assert 0.0030 <= lam1 <= 0.0042
    triangle = 21.5e-4 / 0.6
    assert abs(lam1 / triangle - 1.0) < 0.15
    for quote in vod:
        assert abs(_pv(quote, curve, flat3)) < 0.01


def test_strip_credit_triangle_single_quote(flat3):
    quote = CdsQuote(1.0, 60.0, 60.0, 60.0, recovery=0.4)
    lam = strip_hazard([quote], flat3).intensities[0]
    assert abs(lam / 0.01 - 1.0) < 0.10


def test_strip_is_nested(vod, flat3):
    full = strip_hazard(vod, flat3)
    for k in range(1, len(vod)):
        prefix = strip_hazard(vod[:k], flat3)
        assert prefix.nodes == full.nodes[:k]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 4), st.floats(0.5, 20.0))
def test_strip_monotone_in_quote(idx, bump):
    # Later quotes may become unstrippable after a bump; the node only depends on its prefix.
    base = list(VODAFONE_QUOTES)[: idx + 1]
    q = base[idx]
    bumped = base.copy()
    bumped[idx] = CdsQuote(q.tenor, q.r_bid, q.r_ask + bump, q.r_mid + bump, q.recovery)
    disc = flat_curve(0.03)
    assert strip_hazard(bumped, disc).intensities[idx] >= strip_hazard(base, disc).intensities[idx]


def test_strip_unattainable_quote(flat3):
    quote = CdsQuote(1.0, 9.0e4, 9.0e4, 9.0e4, recovery=0.4)
    with pytest.raises(CalibrationError, match="1.0y"):
        strip_hazard([quote], flat3)


def test_save_hazard(tmp_path):
    curve = HazardCurve(((1.0, 0.01), (3.0, 0.02)))
    save_hazard(curve, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines == ["time_years,intensity", "1.0,0.01", "3.0,0.02"]


def test_hazard_vectorised():
    curve = HazardCurve(((1.0, 0.01), (3.0, 0.03)))
    t = np.array([0.5, 2.0, 4.0])
    np.testing.assert_allclose(curve.survival(t), [curve.survival(x) for x in t])

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from fpcredit.calibrate import (
    H_BOUNDS,
    SIGMA_BOUNDS,
    CalibrationConfig,
    OptimizerConfig,
    QuoteBook,
    _Layout,
    _objective_factory,
    bid_ask_weights,
    calibrate,
    calibrate_at1p_cascade,
    merge_scenarios,
    parameters_to_dict,
    residual_report,
    sbat1p_kernel_calibrate,
    sbat1p_optimize,
    scenarios_from_dict,
    svbat1p_optimize,
)
from fpcredit.cdspricer import CdsGrid, fair_spread
from fpcredit.errors import CalibrationError, InputError
from fpcredit.marketdata import CdsQuote
from fpcredit.survival import FirmDynamics, ScenarioSet, survival_grid

from conftest import TENORS

REF_BARRIER_FIT = ScenarioSet.from_arrays([0.7296, 0.3384], [0.24, 0.24], [0.0248, 0.9752], 0.5)
REF_JOINT_FIT = ScenarioSet.from_arrays([0.3721, 0.6353], [0.1737, 0.2334], [0.9387, 0.0613], 0.0)
REF_JOINT_FIT_WEIGHTED = ScenarioSet.from_arrays([0.3713, 0.6239], [0.1722, 0.2217], [0.9263, 0.0737], 0.0)


def _synthetic_quotes(source, discount, tenors=TENORS):
    curve = survival_grid(source, max(tenors))
    out = []
    for t in tenors:
        probe = CdsQuote(t, 0.0, 0.0, 0.0)
        r = fair_spread(probe.schedule(), probe.lgd, curve, discount)
        out.append(CdsQuote(t, r, r, r))
    return out


# --- AT1P cascade ---------------------------------------------------------------


def test_cascade_vodafone_band(vod, flat3):
    firm = calibrate_at1p_cascade(vod, 0.4, 0.5, flat3)
    assert 0.30 <= firm.sigmas[0] <= 0.43
    assert np.all((firm.sigmas[1:4] >= 0.15) & (firm.sigmas[1:4] <= 0.21))
    report = residual_report(firm, vod, flat3)
    assert np.all(np.abs(report.residuals) < 0.01)
    assert report.in_window.all()


def test_cascade_survivals_track_reference(vod, flat3):
    # Reference survival column; curve-dependent, so a loose band.
    firm = calibrate_at1p_cascade(vod, 0.4, 0.5, flat3)
    np.testing.assert_allclose(firm.survival(np.array(TENORS)),
                               [0.99627, 0.98316, 0.96355, 0.94206, 0.89650], atol=4e-3)


def test_cascade_round_trip(flat3):
    truth = FirmDynamics.piecewise(0.35, 0.3, TENORS, [0.28, 0.19, 0.22, 0.15, 0.25])
    quotes = _synthetic_quotes(truth, flat3)
    firm = calibrate_at1p_cascade(quotes, 0.35, 0.3, flat3)
    np.testing.assert_allclose(firm.sigmas, truth.sigmas, atol=1e-6)


def test_cascade_nested(vod, flat3):
    full = calibrate_at1p_cascade(vod, 0.4, 0.5, flat3)
    part = calibrate_at1p_cascade(vod[:3], 0.4, 0.5, flat3)
    assert part.vol == full.vol[:3]


def test_cascade_errors(flat3):
    with pytest.raises(InputError):
        calibrate_at1p_cascade([], 0.4, 0.5, flat3)
    with pytest.raises(CalibrationError, match="1.0y"):
        calibrate_at1p_cascade([CdsQuote(1.0, 5e4, 5e4, 5e4)], 0.4, 0.5, flat3)


# --- kernel -----------------------------------------------------------------------


def test_kernel_one_fixed_barrier(vod, flat3):
    res = sbat1p_kernel_calibrate(vod[:2], [0.8], 0.24, 0.5, flat3)
    assert res.free_barrier == pytest.approx(0.3710, abs=0.03)
    np.testing.assert_allclose(res.probabilities, [0.9886, 0.0114], atol=0.01)
    assert res.kernel_residual < 1e-6
    assert abs(np.linalg.det(res.matrix)) < 1e-9 * np.linalg.norm(res.matrix) ** 2
    assert res.probabilities.sum() == pytest.approx(1.0, abs=1e-14)


def test_kernel_two_fixed_barriers_and_doubled(vod, flat3):
    base = sbat1p_kernel_calibrate(vod[:3], [0.2, 0.8], 0.24, 0.5, flat3)
    assert base.free_barrier == pytest.approx(0.4303, abs=0.04)
    order = np.argsort(base.barriers)
    np.testing.assert_allclose(base.probabilities[order], [0.6106, 0.3783, 0.0110], atol=0.05)
    doubled = [q.scaled(2.0) for q in vod[:3]]
    assert [q.r_mid for q in doubled] == [43.0, 66.0, 86.0]
    hi = sbat1p_kernel_calibrate(doubled, [0.2, 0.8], 0.24, 0.5, flat3)
    assert hi.free_barrier == pytest.approx(0.4277, abs=0.04)
    top = lambda r: r.probabilities[np.argmax(r.barriers)]
    assert top(hi) > top(base)
    assert hi.expected_barrier >= base.expected_barrier


def test_kernel_single_quote_is_single_barrier(vod, flat3):
    res = sbat1p_kernel_calibrate(vod[:1], [], 0.24, 0.5, flat3)
    np.testing.assert_array_equal(res.probabilities, [1.0])
    firm = FirmDynamics.constant(res.free_barrier, 0.5, 0.24)
    grid = CdsGrid(vod[0].schedule(), flat3)
    assert abs(float(grid.pv(firm.survival(grid.times), vod[0].r_mid, vod[0].lgd))) < 1e-6


def test_kernel_errors(vod, flat3):
    with pytest.raises(InputError):
        sbat1p_kernel_calibrate(vod[:3], [0.8], 0.24, 0.5, flat3)
    with pytest.raises(CalibrationError):
        sbat1p_kernel_calibrate(vod[:2], [0.8], 0.24, 0.5, flat3, bracket=(0.6, 0.95))


# --- optimiser ----------------------------------------------------------------------


def test_sbat1p_three_quotes_exact(vod, flat3):
    rep = sbat1p_optimize(vod[:3], 2, 0.5, flat3)
    assert rep.objective < 1e-6
    order = np.argsort(rep.scenarios.h_ratios)
    np.testing.assert_allclose(rep.scenarios.h_ratios[order], [0.3188, 0.6592], atol=0.03)
    np.testing.assert_allclose(rep.scenarios.probabilities[order], [0.9483, 0.0517], atol=0.02)
    assert rep.expected_barrier == pytest.approx(0.3364, abs=0.03)
    trace = np.array(rep.trace)
    assert np.all(np.diff(trace) <= 1e-18)


def test_sbat1p_synthetic_recovery(flat3):
    truth = ScenarioSet.from_arrays([0.35, 0.7], [0.24, 0.24], [0.9, 0.1], 0.5)
    quotes = _synthetic_quotes(truth, flat3, TENORS[:3])
    rep = sbat1p_optimize(quotes, 2, 0.5, flat3, optimizer=OptimizerConfig(tolerance=1e-16))
    assert rep.objective < 1e-10
    order = np.argsort(rep.scenarios.h_ratios)
    np.testing.assert_allclose(rep.scenarios.h_ratios[order], [0.35, 0.7], atol=1e-4)
    np.testing.assert_allclose(rep.scenarios.probabilities[order], [0.9, 0.1], atol=1e-4)


def test_equal_weights_match_unweighted(vod, flat3):
    cfg = OptimizerConfig(multistart_count=4)
    a = sbat1p_optimize(vod[:3], 2, 0.5, flat3, optimizer=cfg)
    b = sbat1p_optimize(vod[:3], 2, 0.5, flat3, weights=[1.0, 1.0, 1.0], optimizer=cfg)
    assert a.objective == b.objective
    np.testing.assert_array_equal(a.scenarios.h_ratios, b.scenarios.h_ratios)


def test_objective_permutation_invariant(vod, flat3):
    book = QuoteBook(vod, flat3)
    layout = _Layout(2, "scenario", None, H_BOUNDS, SIGMA_BOUNDS)
    f = _objective_factory(book, layout, 0.0, None)
    x = np.array([0.3, -1.2, 0.4, 0.1, 2.0])
    swapped = np.array([-1.2, 0.3, 0.1, 0.4, -2.0])
    assert f(x) == pytest.approx(f(swapped), rel=1e-12)


def _kappa(scen):
    # With beta = 0 survival depends on (H, sigma) only through log(1/H) / sigma.
    return np.sort([math.log(1.0 / f.h_ratio) / f.sigmas[0] for f in scen.firms])


def test_beta_zero_survival_depends_on_kappa_only():
    a = FirmDynamics.constant(0.3721, 0.0, 0.1737)
    kappa = math.log(1 / 0.3721) / 0.1737
    b = FirmDynamics.constant(0.55, 0.0, math.log(1 / 0.55) / kappa)
    t = np.linspace(0.0, 10.0, 41)
    np.testing.assert_allclose(a.survival(t), b.survival(t), atol=1e-14)


@pytest.fixture(scope="module")
def svbat1p_fits(vod, flat3):
    plain = svbat1p_optimize(vod, 0.0, flat3)
    weighted = svbat1p_optimize(vod, 0.0, flat3, weights=bid_ask_weights(vod))
    return plain, weighted


def test_svbat1p_identified_parameters_match_reference(svbat1p_fits):
    plain, weighted = svbat1p_fits
    assert plain.objective < 300.0
    np.testing.assert_allclose(_kappa(plain.scenarios), _kappa(REF_JOINT_FIT), rtol=0.03)
    np.testing.assert_allclose(_kappa(weighted.scenarios), _kappa(REF_JOINT_FIT_WEIGHTED), rtol=0.03)
    np.testing.assert_allclose(np.sort(plain.scenarios.probabilities), [0.0613, 0.9387], atol=0.03)
    np.testing.assert_allclose(np.sort(weighted.scenarios.probabilities), [0.0737, 0.9263], atol=0.03)


def test_svbat1p_reference_point_polishes_to_same_optimum(vod, flat3, svbat1p_fits):
    plain, _ = svbat1p_fits
    book = QuoteBook(vod, flat3)
    layout = _Layout(2, "scenario", None, H_BOUNDS, SIGMA_BOUNDS)
    f = _objective_factory(book, layout, 0.0, None)
    x0 = np.concatenate([layout._unsquash(REF_JOINT_FIT.h_ratios, H_BOUNDS),
                         layout._unsquash(np.array([0.1737, 0.2334]), SIGMA_BOUNDS),
                         [math.log(0.9387 / 0.0613)]])
    res = minimize(f, x0, method="Nelder-Mead",
                   options={"maxiter": 20000, "xatol": 1e-8, "fatol": 1e-12, "adaptive": True})
    h, sigma, _ = layout.decode(res.x)
    assert res.fun == pytest.approx(plain.objective, rel=1e-3)
    np.testing.assert_allclose(h, REF_JOINT_FIT.h_ratios, atol=0.05)
    np.testing.assert_allclose(sigma, [0.1737, 0.2334], atol=0.03)


def test_weighting_moves_residuals(svbat1p_fits):
    plain, weighted = svbat1p_fits
    assert abs(weighted.residuals[2]) < abs(plain.residuals[2])
    assert abs(weighted.residuals[0]) > abs(plain.residuals[0])
    assert weighted.objective == pytest.approx(float(weighted.weights @ weighted.residuals ** 2))
    assert weighted.objective_unweighted == pytest.approx(float(weighted.residuals @ weighted.residuals))


def test_residual_report_barrier_fit(vod, flat3):
    rep = residual_report(REF_BARRIER_FIT, vod, flat3)
    # Reference residuals are on the premium receiver's side: negate our buyer values.
    np.testing.assert_allclose(-rep.residuals, [-2.77, 9.99, -1.47, -22.99, 16.63], atol=3.0)
    # 1y sits on its window edge under flat 3% (2.43 vs 2.45); 3y is clearly outside.
    assert not rep.in_window[1]
    assert rep.expected_barrier == pytest.approx(0.0248 * 0.7296 + 0.9752 * 0.3384)


def test_residual_report_joint_fit(vod, flat3):
    rep = residual_report(REF_JOINT_FIT_WEIGHTED, vod, flat3, weights=bid_ask_weights(vod))
    np.testing.assert_allclose(-rep.residuals, [5.85, -3.76, 4.92, -10.46, 1.47], atol=3.0)
    assert rep.in_window.dtype == bool


def test_bid_ask_weights(vod):
    np.testing.assert_allclose(bid_ask_weights(vod), [1 / 5, 1 / 2, 1 / 2, 1 / 8, 1 / 10])


def test_serialisation_round_trip():
    scen = ScenarioSet.from_arrays([0.3, 0.7], [0.2, 0.3], [0.25, 0.75], 0.5)
    back = scenarios_from_dict(parameters_to_dict(scen))
    assert back == scen
    with pytest.raises(InputError):
        scenarios_from_dict({"beta": 0.5})


def test_merge_scenarios():
    scen = ScenarioSet.from_arrays([0.7296, 0.3384, 0.72965], [0.24] * 3, [0.0124, 0.9752, 0.0124], 0.5)
    merged = merge_scenarios(scen)
    assert len(merged) == 2
    assert merged.probabilities[0] == pytest.approx(0.0248)


def test_calibrate_dispatch(vod, flat3):
    rep = calibrate(vod, flat3, CalibrationConfig(model="at1p"))
    assert rep.model == "at1p" and np.all(np.abs(rep.residuals) < 0.01)
    kern = calibrate(vod[:2], flat3, CalibrationConfig(model="sbat1p", fixed_h=(0.8,)))
    assert kern.objective < 1e-12
    with pytest.raises(InputError):
        CalibrationConfig(model="merton")
    with pytest.raises(InputError):
        CalibrationConfig(weights=(1.0, -1.0))

import math

import numpy as np
import pytest

from pvdecay.circadian import RedistributionMap
from pvdecay.errors import DataError
from pvdecay.model import GammaLaw, ModelParams
from pvdecay.predict import (
    V1_ONLY,
    V1_V25,
    error_report,
    evaluate,
    hourly_coverage,
    median_abs_normalized,
    predict_from_v1,
    predict_with_v25,
)
from pvdecay.simulate import SimConfig, simulate_corpus

PARAMS = ModelParams(0.9874, 0.2319)
IDENTITY = RedistributionMap.identity()


def _law_for(gamma, v1, m=-0.132, sigma=0.0):
    """Gamma law passing through ``gamma`` at ``v1``."""
    return GammaLaw(m, gamma * v1**-m, sigma)


def test_no_decay_gives_constant_forecast():
    p = predict_from_v1(700, ModelParams(1.0, 1.0), _law_for(1.0, 700), IDENTITY)
    np.testing.assert_allclose(p.v_hat, 700, rtol=1e-12)


def test_first_hour_equals_v1(sin_map):
    p = predict_from_v1(1234, PARAMS, _law_for(0.3, 1234, sigma=0.2), sin_map)
    assert p.v_hat[0] == pytest.approx(1234, rel=1e-12)
    assert p.method == V1_ONLY and p.has_band


def test_flat_hour_25_value():
    p = predict_from_v1(1000, PARAMS, _law_for(0.2319, 1000), IDENTITY)
    assert p.v_hat[24] == pytest.approx(1000 * 0.2319 * 0.9874**23, rel=1e-12)
    assert p.v_hat[24] == pytest.approx(173.24, abs=5e-3)


def test_v25_predictor_anchors_both_days(sin_map):
    p = predict_with_v25(900, 150, PARAMS, sin_map)
    assert p.method == V1_V25 and not p.has_band
    assert p.v_hat[0] == pytest.approx(900, rel=1e-12)
    assert p.v_hat[24] == pytest.approx(150, rel=1e-12)


def test_v25_predictor_flat_ratio():
    p = predict_with_v25(900, 150, PARAMS, IDENTITY)
    np.testing.assert_allclose(p.v_hat[25:] / p.v_hat[24:-1], PARAMS.beta, rtol=1e-12)


def test_predictors_share_day_one(sin_map):
    a = predict_from_v1(900, PARAMS, _law_for(0.3, 900, sigma=0.2), sin_map)
    b = predict_with_v25(900, 140, PARAMS, sin_map)
    np.testing.assert_allclose(a.v_hat[:24], b.v_hat[:24], rtol=1e-12)


def test_v25_consistent_with_v1_on_flat_map():
    """Feeding the v1 forecast's own hour 25 back in reproduces the tail."""
    a = predict_from_v1(1000, PARAMS, _law_for(0.2319, 1000), IDENTITY)
    b = predict_with_v25(1000, a.v_hat[24], PARAMS, IDENTITY)
    np.testing.assert_allclose(a.v_hat, b.v_hat, rtol=1e-12)


def test_anchor_linearity(sin_map):
    law = GammaLaw(-0.132, 0.862, 0.2)
    k = 3.0
    a = predict_from_v1(500, PARAMS, law, sin_map)
    b = predict_from_v1(k * 500, PARAMS, law, sin_map)
    np.testing.assert_allclose(b.v_hat[:24], k * a.v_hat[:24], rtol=1e-12)
    c = predict_with_v25(k * 500, k * 80, PARAMS, sin_map)
    np.testing.assert_allclose(c.v_hat, k * predict_with_v25(500, 80, PARAMS, sin_map).v_hat, rtol=1e-12)


def test_anchor_linearity_flat_tail():
    # the gamma law moves the tail by a further k**m
    law = GammaLaw(-0.132, 0.862, 0.2)
    a = predict_from_v1(500, PARAMS, law, IDENTITY)
    b = predict_from_v1(1500, PARAMS, law, IDENTITY)
    np.testing.assert_allclose(b.v_hat[24:], 3 ** (1 - 0.132) * a.v_hat[24:], rtol=1e-12)


def test_band_brackets_forecast(sin_map):
    p = predict_from_v1(2060, PARAMS, GammaLaw(-0.132, 0.862, 0.37), sin_map)
    assert np.all(p.band_low[24:95] < p.v_hat[24:95])
    assert np.all(p.v_hat[24:95] < p.band_high[24:95])
    np.testing.assert_allclose(p.band_low[:24], p.v_hat[:24], rtol=1e-12)


def test_band_ratio_flat():
    p = predict_from_v1(2060, PARAMS, GammaLaw(-0.132, 0.862, 0.37), IDENTITY)
    np.testing.assert_allclose(p.band_high[24:] / p.v_hat[24:], math.exp(0.37), rtol=1e-12)
    np.testing.assert_allclose(p.v_hat[24:] / p.band_low[24:], math.exp(0.37), rtol=1e-12)


def test_band_widens_with_sigma():
    narrow = predict_from_v1(2060, PARAMS, GammaLaw(-0.132, 0.862, 0.1), IDENTITY)
    wide = predict_from_v1(2060, PARAMS, GammaLaw(-0.132, 0.862, 0.4), IDENTITY)
    assert np.all(wide.band_high[24:] > narrow.band_high[24:])
    assert np.all(wide.band_low[24:] < narrow.band_low[24:])


@pytest.mark.parametrize("v1,v25", [(0, 10), (-5, 10), (10, 0), (float("nan"), 1)])
def test_rejects_non_positive_anchors(v1, v25):
    with pytest.raises(DataError):
        predict_with_v25(v1, v25, PARAMS, IDENTITY)


def test_error_report_exact_forecast():
    p = predict_from_v1(1000, PARAMS, _law_for(0.25, 1000, sigma=0.1), IDENTITY)
    r = error_report(p, p.v_hat.copy())
    np.testing.assert_array_equal(r.normalized, 0)
    np.testing.assert_array_equal(r.absolute, 0)
    assert r.coverage == 1.0
    assert r.undefined_hours.size == 0


def test_error_report_double_forecast():
    p = predict_with_v25(1000, 200, PARAMS, IDENTITY)
    r = error_report(p, p.v_hat / 2)
    np.testing.assert_allclose(r.normalized, 1.0, rtol=1e-12)
    assert r.coverage is None


def test_error_report_undefined_on_zero():
    p = predict_with_v25(1000, 200, PARAMS, IDENTITY)
    obs = p.v_hat.copy()
    obs[[30, 40]] = 0
    r = error_report(p, obs)
    assert list(r.undefined_hours) == [31, 41]
    assert np.isfinite(r.absolute).all()
    assert median_abs_normalized([r]) == 0.0


def test_error_report_length_mismatch():
    p = predict_with_v25(1000, 200, PARAMS, IDENTITY)
    with pytest.raises(DataError):
        error_report(p, np.ones(95))


def test_evaluate_ordering_on_simulated_corpus():
    cfg = SimConfig(n_articles=120, seed=77)
    corpus = simulate_corpus(cfg)
    ev = evaluate(corpus.exposures, cfg.params, cfg.law, cfg.rmap)
    assert len(ev.titles) == len(ev.v1_only) == len(ev.v1_v25) > 0
    assert median_abs_normalized(ev.v1_v25) < median_abs_normalized(ev.v1_only)
    cov = hourly_coverage(ev.v1_only)
    assert cov.shape == (96,) and np.all((0 <= cov) & (cov <= 1))

import math

import numpy as np
import pytest
from conftest import mixture
from hypothesis import given
from hypothesis import strategies as st

from tailstop import evt
from tailstop.evt import (
    BootstrapConfig,
    Prediction,
    TailModelParams,
    bootstrap_ci,
    fit_exponential,
    fit_gpd,
    fit_pp,
    gpd_loglik,
    predict_wcdiff,
    pwm_seed,
    return_level,
    select_threshold_bootstrap,
    select_threshold_quantile,
    shape_is_valid,
)
from tailstop.exceptions import (
    EmptyLogError,
    FitError,
    NoValidThresholdError,
    TailstopError,
    TooFewExceedancesError,
)


def gpd_sample(rng, n, scale, shape):
    u = rng.random(n)
    if shape == 0:
        return -scale * np.log1p(-u)
    return scale / shape * ((1 - u) ** (-shape) - 1)


def grad_norm(scale, shape, y, h=1e-5):
    f = lambda s, x: gpd_loglik(s, x, y)
    gs = (f(scale + h, shape) - f(scale - h, shape)) / (2 * h)
    gx = (f(scale, shape + h) - f(scale, shape - h)) / (2 * h)
    return math.hypot(gs, gx)


# -- thresholds ------------------------------------------------------------------


def test_quantile_threshold_on_permutation(rng):
    d = rng.permutation(np.arange(1, 101))
    c = select_threshold_quantile(d, 0.95)
    assert (c.u, c.exceedance_count, c.method) == (95.0, 5, "quantile")


def test_quantile_threshold_constant_stream():
    with pytest.raises(TooFewExceedancesError):
        select_threshold_quantile([4] * 50, 0.95)


def test_quantile_threshold_count_matches_scan(rng):
    d = rng.integers(0, 500, 10_000)
    c = select_threshold_quantile(d, 0.95)
    assert c.exceedance_count == sum(1 for x in d if x > c.u)


def test_nearest_rank_is_exact():
    assert evt.nearest_rank(0.07, 100) == 7
    assert evt.nearest_rank(0.95, 100) == 95
    assert evt.nearest_rank(0.001, 10) == 1


def test_bootstrap_threshold_constant_stream():
    with pytest.raises(NoValidThresholdError):
        select_threshold_bootstrap([7] * 1000, BootstrapConfig(resamples=50))


def test_bootstrap_threshold_records_every_candidate():
    c = select_threshold_bootstrap(mixture(3), BootstrapConfig(resamples=200))
    assert [q for q, _, _ in c.candidate_scores] == list(evt.CANDIDATE_QUANTILES)
    assert (c.quantile, c.u) in {(q, u) for q, u, _ in c.candidate_scores}
    chosen = [s for q, _, s in c.candidate_scores if q == c.quantile][0]
    assert chosen == min(s for _, _, s in c.candidate_scores)
    assert c.exceedance_count == int((mixture(3) > c.u).sum())


def test_bootstrap_threshold_is_reproducible():
    cfg = BootstrapConfig(resamples=100, seed=9)
    assert select_threshold_bootstrap(mixture(1), cfg) == select_threshold_bootstrap(mixture(1), cfg)


@pytest.fixture(scope="module")
def mixture_runs():
    out = []
    for seed in range(100):
        d = mixture(seed)
        rep = evt.predict_wcdiff_detailed(d, 20_000, compute_ci=False,
                                          cfg=BootstrapConfig(seed=seed))
        out.append((d, rep))
    return out


def test_bootstrap_prefers_clean_tail(mixture_runs):
    hits = sum(
        rep.threshold is not None and rep.threshold.u >= evt.empirical_quantile(d, 0.94)
        for d, rep in mixture_runs
    )
    assert hits >= 80


@pytest.mark.xfail(strict=True, reason=(
    "the return level with the true tail parameters covers the training max in only "
    "about 78% of seeds (80/100 here), so an unbiased fit cannot reach 80 reliably"
))
def test_prediction_overapproximates_on_mixture(mixture_runs):
    hits = sum(rep.prediction.value >= d.max() for d, rep in mixture_runs)
    assert hits >= 80


# -- fits ------------------------------------------------------------------------


def test_exponential_fit_examples():
    assert fit_exponential([2, 4], 0, 1).scale == 3
    assert fit_exponential([5, 5, 5], 1, 0.5).scale == 5
    with pytest.raises(TooFewExceedancesError):
        fit_exponential([1.0], 0, 1)
    with pytest.raises(TailstopError):
        fit_exponential([], 0, 1)


def test_exponential_fit_recovers_scale():
    y = np.random.default_rng(11).exponential(11.4, 5000)
    assert fit_exponential(y, 0, 1).scale == pytest.approx(11.4, rel=0.05)


def test_gpd_on_exponential_data():
    y = np.random.default_rng(5).exponential(2.0, 5000)
    p = fit_gpd(y, 0, 1)
    assert abs(p.shape) < 0.05
    assert p.scale == pytest.approx(2.0, rel=0.1)


def test_gpd_recovers_negative_shape():
    y = gpd_sample(np.random.default_rng(6), 5000, 2.0, -0.2)
    p = fit_gpd(y, 0, 1)
    assert p.scale == pytest.approx(2.0, rel=0.1)
    assert abs(p.shape + 0.2) < 0.08
    assert grad_norm(p.scale, p.shape, y) < 1e-3
    assert np.all(1 + p.shape * y / p.scale > 0)


def test_gpd_uniform_excesses_have_bounded_tail():
    y = np.random.default_rng(8).uniform(0, 10, 5000)
    p = fit_gpd(y, 0, 1)
    assert p.shape < 0
    assert np.all(1 + p.shape * y / p.scale > 0)


def test_gpd_never_regresses_from_seed():
    for seed in range(10):
        y = gpd_sample(np.random.default_rng(seed), 400, 3.0, -0.1)
        s0, x0 = pwm_seed(y)
        assert fit_gpd(y, 0, 1).loglik >= gpd_loglik(s0, x0, y)


@pytest.mark.parametrize("shape", [-0.4, -0.1, 0.0, 0.2])
def test_gpd_gradient_vanishes(shape):
    y = gpd_sample(np.random.default_rng(12), 2000, 1.5, shape)
    p = fit_gpd(y, 0, 1)
    assert grad_norm(p.scale, p.shape, y) < 1e-3


def test_gpd_errors():
    with pytest.raises(TooFewExceedancesError):
        fit_gpd([1, 2, 3], 0, 1)
    with pytest.raises(FitError):
        fit_gpd([2.0] * 20, 0, 1)


def test_fits_are_deterministic():
    y = gpd_sample(np.random.default_rng(2), 1000, 2.0, -0.1)
    assert fit_gpd(y, 0, 1) == fit_gpd(y, 0, 1)


def test_profile_mle_agrees_with_simplex():
    y = gpd_sample(np.random.default_rng(4), 3000, 2.0, -0.2)
    scale, shape = evt.gpd_profile_mle(y)
    p = fit_gpd(y, 0, 1)
    assert scale == pytest.approx(p.scale, rel=1e-3)
    assert shape == pytest.approx(p.shape, abs=1e-3)


def test_pp_recovers_forward_simulation():
    # exceedances of u=0 from a point process with (mu, sigma, xi) = (36, 11, 0), T=10
    g = np.random.default_rng(21)
    period, T, mu, sigma = 300, 10, 36.0, 11.0
    k = g.poisson(T * math.exp(mu / sigma))
    d = np.zeros(period * T)
    d[:k] = g.exponential(sigma, k)
    g.shuffle(d)
    p = fit_pp(d, 0.0, obs_per_period=period)
    assert p.location == pytest.approx(mu, rel=0.15)
    assert p.scale == pytest.approx(sigma, rel=0.15)
    assert abs(p.shape) < 0.15


def test_pp_single_exceedance():
    with pytest.raises(TooFewExceedancesError):
        fit_pp([0] * 99 + [5], 0)


def test_pp_matches_unpolished_estimate():
    d = np.random.default_rng(3).exponential(10, 4000)
    a = fit_pp(d, evt.empirical_quantile(d, 0.9))
    b = fit_pp(d, evt.empirical_quantile(d, 0.9), polish=False)
    assert a.location == pytest.approx(b.location, rel=1e-3)
    assert a.scale == pytest.approx(b.scale, rel=1e-3)


def test_params_validation():
    with pytest.raises(ValueError):
        TailModelParams("gpd", 0, -1, 0, 0, 0.5)
    with pytest.raises(ValueError):
        TailModelParams("gpd", 0, 1, 0, 0, 0)
    with pytest.raises(ValueError):
        TailModelParams("exponential", 0, 1, 0.1, 0, 0.5)


@pytest.mark.parametrize("shape,valid", [(-0.2, True), (0.0, True), (0.1, False)])
def test_shape_validity(shape, valid):
    assert shape_is_valid(TailModelParams("gpd", 0, 1, shape, 0, 1)) is valid


# -- return levels ---------------------------------------------------------------


def test_return_level_examples():
    p = TailModelParams("exponential", 0, 1, 0, 0, 1.0)
    assert return_level(p, math.e) == pytest.approx(1.0)
    for kind, shape in (("exponential", 0.0), ("gpd", -0.3)):
        q = TailModelParams(kind, 4, 2, shape, 4, 0.01)
        assert return_level(q, 100) == 4
        assert return_level(q, 50) == 4


def test_pp_short_horizon_raises():
    p = TailModelParams("pp", 10, 2, 0, 5, 0.1)
    with pytest.raises(TailstopError):
        return_level(p, 365)
    assert return_level(p, 366) > 0


def test_return_level_calibration():
    hits = 0
    p = TailModelParams("exponential", 0, 10, 0, 0, 1.0)
    level = return_level(p, 5000)
    for seed in range(200):
        m = np.random.default_rng(seed).exponential(10, 5000).max()
        hits += level - 30 <= m <= level + 30
    assert hits >= 180


def test_gpd_level_bounded_by_endpoint():
    p = TailModelParams("gpd", 0, 2, -0.25, 0, 0.1)
    assert return_level(p, 10**12) <= 0 - 2 / -0.25


@given(st.sampled_from(["exponential", "gpd", "pp"]), st.floats(-0.8, 0.0),
       st.integers(366, 10**6), st.integers(1, 10**6))
def test_return_level_monotone(kind, shape, h1, dh):
    shape = 0.0 if kind == "exponential" else shape
    p = TailModelParams(kind, 10, 3, shape, 5, 0.05)
    assert return_level(p, h1) <= return_level(p, h1 + dh) + 1e-9


def test_shift_equivariance(rng):
    d = rng.exponential(5, 3000).round(3)
    c = 17.0
    a = select_threshold_quantile(d, 0.9)
    b = select_threshold_quantile(d + c, 0.9)
    assert b.u == pytest.approx(a.u + c)
    pa = fit_exponential(d[d > a.u] - a.u, a.u, 0.1)
    pb = fit_exponential((d + c)[d + c > b.u] - b.u, b.u, 0.1)
    assert pb.scale == pytest.approx(pa.scale, rel=1e-9)
    assert return_level(pb, 1000) == pytest.approx(return_level(pa, 1000) + c)


# -- bootstrap and prediction ----------------------------------------------------


def test_bootstrap_constant_pipeline():
    assert bootstrap_ci(np.arange(50), lambda s, h: 3.0, 10, BootstrapConfig(resamples=20)) == (3.0, 3.0)


def test_bootstrap_too_many_failures():
    def flaky(sample, h):
        raise FitError("nope")
    with pytest.raises(evt.BootstrapError):
        bootstrap_ci(np.arange(50), flaky, 10, BootstrapConfig(resamples=20))


def _exp_pipeline(sample, h):
    c = select_threshold_quantile(sample, 0.9)
    x = sample[sample > c.u]
    return return_level(fit_exponential(x - c.u, c.u, x.size / sample.size), h)


def test_ci_widens_with_spread():
    wider = 0
    cfg = BootstrapConfig(resamples=200)
    for seed in range(100):
        z = np.random.default_rng(seed).exponential(1.0, 1000)
        lo5, hi5 = bootstrap_ci(5 * z, _exp_pipeline, 5000, cfg)
        lo20, hi20 = bootstrap_ci(20 * z, _exp_pipeline, 5000, cfg)
        wider += (hi20 - lo20) > (hi5 - lo5)
    assert wider >= 95


def test_block_resample_indices():
    g = np.random.default_rng(0)
    idx = evt.resample_indices(1000, g, block=True)
    assert idx.size == 1000 and idx.min() >= 0 and idx.max() < 1000
    # block length ceil(1000^(1/3)) = 10: indices run in consecutive blocks
    assert np.all(np.diff(idx.reshape(100, 10), axis=1) == 1)


def test_prediction_render():
    assert Prediction(73.3, 47.7, 98.9, 20000, "evt-exponential").render() == "73.3 [47.7, 98.9]"
    with pytest.raises(ValueError):
        Prediction(10, 11, 12, 1, "x")


def test_predict_constant_falls_back():
    p = predict_wcdiff([6] * 500, 1000)
    assert p.fallback_used and p.value == 6
    assert "fallback" in p.method


def test_predict_heavy_tail_falls_back():
    d = np.random.default_rng(1).pareto(1.0, 3000) * 10
    p = predict_wcdiff(d, 5000, method="exponential", threshold_method="quantile",
                       cfg=BootstrapConfig(resamples=50))
    # exponential is always shape 0, so the fit stands
    assert not p.fallback_used
    q = evt.predict_wcdiff_detailed(d, 5000, method="pp", threshold_method="quantile",
                                    cfg=BootstrapConfig(resamples=50))
    assert q.prediction.fallback_used
    assert q.prediction.value == d.max()


def test_predict_empty():
    with pytest.raises(EmptyLogError):
        predict_wcdiff([], 10)


def test_predict_interval_contains_value():
    d = gpd_sample(np.random.default_rng(4), 5000, 10.0, -0.2)
    p = predict_wcdiff(d, 20_000, threshold_method="quantile", cfg=BootstrapConfig(resamples=200))
    assert not p.fallback_used
    assert p.ci_low <= p.value <= p.ci_high


def test_predict_is_reproducible():
    d = mixture(7)
    cfg = BootstrapConfig(resamples=100, seed=3)
    assert predict_wcdiff(d, 20_000, cfg=cfg) == predict_wcdiff(d, 20_000, cfg=cfg)

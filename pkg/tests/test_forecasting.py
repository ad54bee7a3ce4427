import numpy as np
import pytest

from diffusia import estimation as est, forecasting as fc
from diffusia.errors import RefinementError, ValidationError
from diffusia.simulation import DEFAULT_TRUE_PARAMS as TRUE, SimScenario, generate


@pytest.fixture(scope="module")
def noisy_fit():
    data = generate(SimScenario(noise_to_signal=0.02), 1)
    return est.fit(data, est.FitConfig("cdmp", "instantaneous", TRUE))


def _seasonal_ar(n, phi, rng, noise=1.0, s=12):
    x = np.zeros(n + 10 * s)
    e = noise * rng.standard_normal(x.size)
    for t in range(s, x.size):
        x[t] = phi * x[t - s] + e[t]
    return x[10 * s:]


# -- bands ------------------------------------------------------------------------------------

def test_zero_covariance_gives_zero_width(noisy_fit):
    band = fc.forecast_bands(noisy_fit, 24, covariance=np.zeros((8, 8)))
    assert np.array_equal(band.lower, band.mean) and np.array_equal(band.upper, band.mean)


def test_mean_is_closed_form(noisy_fit):
    band = fc.forecast_bands(noisy_fit, 6)
    pred = est.predict_params(noisy_fit.estimates, np.arange(189.0, 195.0), start=188.0)
    assert np.array_equal(band.t_grid, np.arange(189.0, 195.0))
    assert np.array_equal(band.mean[0], pred.cum1) and np.array_equal(band.mean[1], pred.cum2)


@pytest.mark.parametrize("scale", ["cumulative", "instantaneous"])
def test_band_symmetry_and_order(noisy_fit, scale):
    band = fc.forecast_bands(noisy_fit, 24, scale=scale)
    assert band.has_band
    assert np.allclose(band.upper - band.mean, band.mean - band.lower, rtol=1e-12, atol=0)
    assert np.all(band.lower <= band.mean) and np.all(band.mean <= band.upper)


def test_wider_level_contains_narrower(noisy_fit):
    b95 = fc.forecast_bands(noisy_fit, 24, level=0.95)
    b99 = fc.forecast_bands(noisy_fit, 24, level=0.99)
    assert np.all(b99.lower <= b95.lower) and np.all(b99.upper >= b95.upper)


def test_cumulative_band_widens(noisy_fit):
    band = fc.forecast_bands(noisy_fit, 36)
    width = band.upper - band.lower
    assert np.all(np.diff(width, axis=1) >= 0)


def test_delta_method_against_parameter_draws(noisy_fit):
    band = fc.forecast_bands(noisy_fit, 12)
    rng = np.random.default_rng(0)
    draws = rng.multivariate_normal(noisy_fit.estimates.to_vector(), noisy_fit.covariance, size=4000)
    t = band.t_grid
    paths = []
    for x in draws:
        pred = est.predict_params(noisy_fit.estimates.from_vector("cdmp", x), t, start=188.0)
        paths.append(np.concatenate([pred.cum1, pred.cum2]))
    sd = np.std(paths, axis=0).reshape(2, -1)
    half = (band.upper - band.mean) / 1.959963984540054
    assert np.allclose(half, sd, rtol=0.08)


def test_noiseless_fit_collapses_band():
    data = est.synthetic_series(TRUE, 188)
    res = est.fit(data, est.FitConfig("cdmp", "instantaneous", TRUE))
    band = fc.forecast_bands(res, 12)
    assert np.max((band.upper - band.lower) / band.mean) < 1e-6


def test_missing_covariance_flags_no_band(noisy_fit):
    from dataclasses import replace
    bare = replace(noisy_fit, covariance=None)
    band = fc.forecast_bands(bare, 5)
    assert not band.has_band and np.array_equal(band.lower, band.mean)


@pytest.mark.parametrize("kwargs", [dict(horizon=0), dict(horizon=5, level=1.0), dict(horizon=5, scale="log")])
def test_band_arguments(noisy_fit, kwargs):
    with pytest.raises(ValidationError):
        fc.forecast_bands(noisy_fit, **kwargs)


def test_band_coverage_at_one_year():
    truth = est.predict_params(TRUE, np.arange(189.0, 201.0), start=188.0)
    target = np.array([truth.cum1[-1], truth.cum2[-1]])
    hits = []
    for r in range(500):
        data = generate(SimScenario(noise_to_signal=0.02, seed=9), r)
        res = est.fit(data, est.FitConfig("cdmp", "instantaneous", TRUE))
        band = fc.forecast_bands(res, 12)
        hits.append((band.lower[:, -1] <= target) & (target <= band.upper[:, -1]))
    cover = np.mean(hits, axis=0)
    assert np.all((cover >= 0.90) & (cover <= 0.98)), cover


# -- seasonal ARMA -------------------------------------------------------------------------

def test_config_parse_and_validation():
    assert fc.SarmaConfig.parse("2,1,1,0") == fc.SarmaConfig(2, 1, 1, 0, 12)
    assert fc.SarmaConfig.parse("0,0,1,1", season_length=4).season_length == 4
    for bad in ("1,2,3", "a,0,1,0"):
        with pytest.raises(ValidationError):
            fc.SarmaConfig.parse(bad)
    with pytest.raises(ValidationError):
        fc.SarmaConfig(-1, 0, 1, 0)
    with pytest.raises(ValidationError):
        fc.SarmaConfig(season_length=1)


def test_zero_residuals_give_zero_refinement():
    ref = fc.fit_sarma_refinement(np.zeros((2, 120)), horizon=6)
    assert np.all(ref.forecasts == 0)
    for m in ref.models:
        assert np.all(m.ar == 0) and np.all(m.seasonal_ar == 0)


@pytest.mark.parametrize("seed", range(5))
def test_seasonal_ar_recovery(seed):
    x = _seasonal_ar(188, 0.6, np.random.default_rng(seed), noise=0.1)
    model = fc.fit_sarma(x, fc.SarmaConfig(0, 0, 1, 0))
    assert model.converged
    assert abs(model.seasonal_ar[0] - 0.6) <= 0.1


def test_mixed_order_recovery():
    rng = np.random.default_rng(3)
    n, phi, Phi, theta = 3000, 0.5, 0.4, 0.3
    e = rng.standard_normal(n + 200)
    x = np.zeros_like(e)
    for t in range(13, x.size):
        x[t] = phi * x[t - 1] + Phi * x[t - 12] - phi * Phi * x[t - 13] + e[t] + theta * e[t - 1]
    model = fc.fit_sarma(x[200:], fc.SarmaConfig(1, 1, 1, 0))
    assert model.ar[0] == pytest.approx(phi, abs=0.06)
    assert model.ma[0] == pytest.approx(theta, abs=0.06)
    assert model.seasonal_ar[0] == pytest.approx(Phi, abs=0.06)
    assert model.sigma2 == pytest.approx(1.0, rel=0.1)


def test_forecast_follows_recursion():
    x = _seasonal_ar(120, 0.6, np.random.default_rng(1))
    model = fc.fit_sarma(x, fc.SarmaConfig(0, 0, 1, 0))
    f = model.forecast(x, 24)
    phi = model.seasonal_ar[0]
    assert np.allclose(f[:12], phi * x[-12:], rtol=1e-12)
    assert np.allclose(f[12:], phi ** 2 * x[-12:], rtol=1e-12)


def test_white_noise_gives_no_gain():
    ratios = []
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(240)
        train, test = x[:180], x[180:]
        model = fc.fit_sarma(train)
        pred = model.one_step_predictions(x)[180:]
        ratios.append(np.sqrt(np.mean((test - pred) ** 2)) / np.sqrt(np.mean(test ** 2)))
    assert np.mean(ratios) <= 1.05


def test_shuffled_residuals_shrink_with_length():
    rng = np.random.default_rng(8)
    base = _seasonal_ar(2000, 0.6, rng)
    means = []
    for n in (60, 120, 240):
        mags = []
        for _ in range(30):
            x = rng.permutation(base)[:n]
            m = fc.fit_sarma(x)
            mags.append(np.abs(np.concatenate([m.ar, m.seasonal_ar])).mean())
        means.append(np.mean(mags))
    assert means[0] > means[1] > means[2]


def test_refinement_additivity(noisy_fit):
    band = fc.refined_forecast(noisy_fit, 12)
    ref = fc.fit_sarma_refinement(noisy_fit.residuals_instantaneous, horizon=12)
    assert np.array_equal(band.refined, band.mean + ref.forecasts)
    assert band.scale == "instantaneous"


def test_exogenous_regressor():
    rng = np.random.default_rng(4)
    n = 240
    exog = rng.standard_normal((n + 12, 1))
    noise = _seasonal_ar(n + 12, 0.5, rng, noise=0.5)
    x = 3.0 * exog[:, 0] + noise
    model = fc.fit_sarma(x[:n], fc.SarmaConfig(0, 0, 1, 0), exog=exog[:n])
    assert model.exog_coef[0] == pytest.approx(3.0, abs=0.1)
    f = model.forecast(x[:n], 12, exog_history=exog[:n], exog_future=exog[n:])
    assert f.shape == (12,)
    with pytest.raises(ValidationError):
        model.forecast(x[:n], 12, exog_history=exog[:n])


def test_short_series_rejected():
    with pytest.raises(RefinementError):
        fc.fit_sarma(np.ones(30))


def test_too_many_coefficients_rejected():
    with pytest.raises(RefinementError):
        fc.fit_sarma(np.random.default_rng(0).standard_normal(40), fc.SarmaConfig(4, 4, 1, 0))


def test_explosive_fit_rejected():
    t = np.arange(100)
    with pytest.raises(RefinementError):
        fc.fit_sarma(1.08 ** t, fc.SarmaConfig(1, 0, 0, 0))

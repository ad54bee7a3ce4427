"""Mean forecasts with delta-method bands, and seasonal ARMA residual refinement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from . import core, kernels
from .errors import DiffusiaError, RefinementError, ValidationError
from .estimation import FitResult, predict_params
from .lm import levenberg_marquardt

GRAD_REL_STEP = 1e-6
GRAD_SCALE_FLOOR = 1e-2
ROOT_MARGIN = 1e-6


@dataclass(frozen=True)
class ForecastBand:
    t_grid: np.ndarray
    mean: np.ndarray  # shape (2, H)
    lower: np.ndarray
    upper: np.ndarray
    level: float
    scale: str
    has_band: bool
    refined: Optional[np.ndarray] = None

    def brand(self, i: int) -> dict:
        return {"mean": self.mean[i], "lower": self.lower[i], "upper": self.upper[i]}


def _curves(params: core.CompetitionParams, t: np.ndarray, scale: str, start: float) -> np.ndarray:
    pred = predict_params(params, t, start=start)
    if scale == "cumulative":
        return np.concatenate([pred.cum1, pred.cum2])
    return np.concatenate([pred.inst1, pred.inst2])


def trajectory_gradient(params: core.CompetitionParams, t: np.ndarray, scale: str = "cumulative",
                        start: Optional[float] = None) -> np.ndarray:
    """Central-difference sensitivities of the stacked curves, shape ``(2H, k)``."""
    if start is None:
        start = max(float(t[0]) - 1.0, 0.0)
    family = params.family
    x = params.to_vector()
    steps = GRAD_REL_STEP * np.maximum(np.abs(x), GRAD_SCALE_FLOOR)
    cols = []
    for j, h in enumerate(steps):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fp = _curves(core.CompetitionParams.from_vector(family, xp), t, scale, start)
        fm = _curves(core.CompetitionParams.from_vector(family, xm), t, scale, start)
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


def forecast_bands(result: FitResult, horizon: int, level: float = 0.95, scale: str = "cumulative",
                   covariance: Optional[np.ndarray] = None) -> ForecastBand:
    """Pointwise Wald bands ``mean +/- z * sqrt(g' Cov g)`` for months N+1..N+horizon.

    When the fit has no covariance the band collapses onto the mean and
    ``has_band`` is False.
    """
    if horizon < 1:
        raise ValidationError("horizon must be at least one month")
    if not 0 < level < 1:
        raise ValidationError("level must lie strictly between 0 and 1")
    if scale not in ("cumulative", "instantaneous"):
        raise ValidationError(f"unknown scale {scale!r}")
    data = result.data
    step = data.spacing
    t = data.t[-1] + step * np.arange(1, horizon + 1)
    start = float(data.t[-1])
    params = result.estimates
    mean = _curves(params, t, scale, start).reshape(2, horizon)
    cov = result.covariance if covariance is None else np.asarray(covariance, dtype=float)
    if cov is None:
        return ForecastBand(t, mean, mean.copy(), mean.copy(), level, scale, has_band=False)
    g = trajectory_gradient(params, t, scale, start)
    var = np.einsum("ij,jk,ik->i", g, cov, g)
    half = norm.ppf(0.5 + level / 2.0) * np.sqrt(np.clip(var, 0.0, None)).reshape(2, horizon)
    return ForecastBand(t, mean, mean - half, mean + half, level, scale, has_band=True)


# -- seasonal ARMA refinement --------------------------------------------------


@dataclass(frozen=True)
class SarmaConfig:
    ar_order: int = 1
    ma_order: int = 0
    seasonal_ar_order: int = 1
    seasonal_ma_order: int = 0
    season_length: int = 12

    def __post_init__(self):
        orders = (self.ar_order, self.ma_order, self.seasonal_ar_order, self.seasonal_ma_order)
        if any(o < 0 for o in orders):
            raise ValidationError("ARMA orders must be non-negative")
        if self.season_length < 2:
            raise ValidationError("season_length must be at least 2")

    @property
    def n_coefficients(self) -> int:
        return self.ar_order + self.ma_order + self.seasonal_ar_order + self.seasonal_ma_order

    @classmethod
    def parse(cls, text: str, season_length: int = 12) -> "SarmaConfig":
        """Parse ``"P,Q,SP,SQ"``."""
        try:
            parts = [int(v) for v in text.split(",")]
        except ValueError:
            raise ValidationError(f"orders must be integers, got {text!r}") from None
        if len(parts) != 4:
            raise ValidationError(f"expected four comma-separated orders, got {text!r}")
        return cls(*parts, season_length=season_length)


def _lag_poly(coefs, spacing: int, sign: float) -> np.ndarray:
    poly = np.zeros(len(coefs) * spacing + 1)
    poly[0] = 1.0
    for i, c in enumerate(coefs):
        poly[(i + 1) * spacing] = sign * c
    return poly


@dataclass(frozen=True)
class SarmaModel:
    """``phi(B) Phi(B^s) (x_t - b'X_t) = theta(B) Theta(B^s) a_t``."""

    config: SarmaConfig
    ar: np.ndarray
    ma: np.ndarray
    seasonal_ar: np.ndarray
    seasonal_ma: np.ndarray
    exog_coef: np.ndarray
    sigma2: float
    innovations: np.ndarray
    converged: bool

    @property
    def ar_lags(self) -> np.ndarray:
        """Expanded AR weights on lags 1.. in ``x_t = sum w_j x_{t-j} + ...``."""
        s = self.config.season_length
        poly = np.convolve(_lag_poly(self.ar, 1, -1.0), _lag_poly(self.seasonal_ar, s, -1.0))
        return -poly[1:]

    @property
    def ma_lags(self) -> np.ndarray:
        s = self.config.season_length
        poly = np.convolve(_lag_poly(self.ma, 1, 1.0), _lag_poly(self.seasonal_ma, s, 1.0))
        return poly[1:]

    def forecast(self, history: np.ndarray, steps: int, exog_history=None, exog_future=None) -> np.ndarray:
        """Residual forecasts for the ``steps`` months following ``history``."""
        history = np.asarray(history, dtype=float)
        xh = _remove_exog(history, exog_history, self.exog_coef)
        ar, ma = self.ar_lags, self.ma_lags
        start = ar.size
        innov = kernels.arma_residuals(np.ascontiguousarray(xh), ar, ma, start)
        innov[:start] = 0.0
        x = np.concatenate([xh, np.zeros(steps)])
        a = np.concatenate([innov, np.zeros(steps)])
        n = xh.size
        for h in range(steps):
            t = n + h
            val = 0.0
            for j in range(ar.size):
                if t - j - 1 >= 0:
                    val += ar[j] * x[t - j - 1]
            for j in range(ma.size):
                if t - j - 1 >= 0:
                    val += ma[j] * a[t - j - 1]
            x[t] = val
        out = x[n:]
        if self.exog_coef.size:
            if exog_future is None:
                raise ValidationError("exogenous regressors need future values to forecast")
            out = out + np.asarray(exog_future, dtype=float).reshape(steps, -1) @ self.exog_coef
        return out

    def one_step_predictions(self, series: np.ndarray, exog=None) -> np.ndarray:
        """In-sample/rolling one-step predictions ``x_t - a_t`` with frozen coefficients."""
        series = np.asarray(series, dtype=float)
        xh = _remove_exog(series, exog, self.exog_coef)
        ar, ma = self.ar_lags, self.ma_lags
        innov = kernels.arma_residuals(np.ascontiguousarray(xh), ar, ma, ar.size)
        pred = xh - innov
        pred[: ar.size] = 0.0
        return pred + (series - xh)


def _remove_exog(x, exog, coef):
    if coef.size == 0:
        return x
    if exog is None:
        raise ValidationError("model was fitted with exogenous regressors; pass them")
    return x - np.asarray(exog, dtype=float).reshape(x.size, -1) @ coef


def _check_roots(poly: np.ndarray, what: str):
    if poly.size <= 1 or np.all(poly[1:] == 0):
        return
    # numpy.roots expects the highest power first
    roots = np.roots(poly[::-1])
    if roots.size and np.min(np.abs(roots)) <= 1.0 + ROOT_MARGIN:
        raise RefinementError(f"fitted {what} polynomial has a root inside the unit circle "
                              f"(min |root| = {np.min(np.abs(roots)):.4f})")


def fit_sarma(series, config: SarmaConfig = SarmaConfig(), exog=None, max_iter: int = 200) -> SarmaModel:
    """Conditional least squares fit of a multiplicative seasonal ARMA.

    Innovations before the largest AR lag are fixed at zero and excluded from
    the objective.
    """
    x = np.ascontiguousarray(np.asarray(series, dtype=float))
    s = config.season_length
    if x.size < 3 * s:
        raise RefinementError(f"need at least {3 * s} residuals, got {x.size}")
    X = None if exog is None else np.asarray(exog, dtype=float).reshape(x.size, -1)
    n_exog = 0 if X is None else X.shape[1]
    k = config.n_coefficients + n_exog
    if k >= x.size / 5:
        raise RefinementError(f"{k} parameters is too many for {x.size} residuals")
    sizes = (config.ar_order, config.ma_order, config.seasonal_ar_order, config.seasonal_ma_order)
    cuts = np.cumsum(sizes)

    def unpack(theta):
        ar, ma, sar, sma = np.split(theta[: cuts[-1]], cuts[:-1])
        return ar, ma, sar, sma, theta[cuts[-1]:]

    ar_span = config.ar_order + s * config.seasonal_ar_order

    def innovations(theta):
        ar, ma, sar, sma, beta = unpack(theta)
        xx = x if X is None else x - X @ beta
        w_ar = -np.convolve(_lag_poly(ar, 1, -1.0), _lag_poly(sar, s, -1.0))[1:]
        w_ma = np.convolve(_lag_poly(ma, 1, 1.0), _lag_poly(sma, s, 1.0))[1:]
        return kernels.arma_residuals(np.ascontiguousarray(xx), w_ar, w_ma, ar_span)[ar_span:]

    theta0 = np.zeros(k)
    if k == 0:
        resid = innovations(theta0)
        return SarmaModel(config, *[np.zeros(0)] * 5, float(resid @ resid / max(resid.size, 1)),
                          resid, True)
    try:
        lm = levenberg_marquardt(innovations, theta0, tol=1e-12, max_iter=max_iter, scale_floor=1e-2)
    except DiffusiaError as exc:
        raise RefinementError(f"seasonal ARMA objective failed: {exc}") from exc
    ar, ma, sar, sma, beta = unpack(lm.x)
    _check_roots(_lag_poly(ar, 1, -1.0), "AR")
    _check_roots(_lag_poly(sar, 1, -1.0), "seasonal AR")
    _check_roots(_lag_poly(ma, 1, 1.0), "MA")
    _check_roots(_lag_poly(sma, 1, 1.0), "seasonal MA")
    resid = lm.residuals
    sigma2 = float(resid @ resid / max(resid.size - k, 1))
    return SarmaModel(config, ar, ma, sar, sma, beta, sigma2, resid, lm.converged)


@dataclass(frozen=True)
class SarmaRefinement:
    models: tuple
    forecasts: np.ndarray  # shape (2, horizon)


def fit_sarma_refinement(residuals, config: SarmaConfig = SarmaConfig(), horizon: int = 12,
                         exog=None, exog_future=None) -> SarmaRefinement:
    """Fit one seasonal ARMA per brand to monthly-scale residuals and forecast them."""
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    models, fcs = [], []
    for series in residuals:
        model = fit_sarma(series, config, exog=exog)
        models.append(model)
        fcs.append(model.forecast(series, horizon, exog_history=exog, exog_future=exog_future))
    return SarmaRefinement(tuple(models), np.vstack(fcs))


def refined_forecast(result: FitResult, horizon: int, config: SarmaConfig = SarmaConfig(),
                     level: float = 0.95) -> ForecastBand:
    """Monthly-scale band plus the seasonal ARMA residual forecast added to the mean."""
    band = forecast_bands(result, horizon, level, scale="instantaneous")
    ref = fit_sarma_refinement(result.residuals_instantaneous, config, horizon)
    return ForecastBand(band.t_grid, band.mean, band.lower, band.upper, band.level, band.scale,
                        band.has_band, refined=band.mean + ref.forecasts)

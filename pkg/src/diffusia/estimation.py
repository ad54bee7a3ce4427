"""Joint nonlinear least-squares fit of both brands' sales.

Both brands' series are stacked into one response vector (brand 1 first) and
fitted by Levenberg-Marquardt.  Standard errors come from the usual
``s^2 (J'J)^-1`` approximation at the optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import core
from .errors import DiffusiaError, DomainError, ValidationError
from .lm import fd_jacobian, levenberg_marquardt

MODELS = ("cdmp", "constant", "gg-nosqrt", "gamma")
SCALES = ("cumulative", "instantaneous")
Z95 = 1.96
JAC_REL_STEP = 1e-6
JAC_SCALE_FLOOR = 1e-2
COND_LIMIT = 1e14


@dataclass(frozen=True)
class SalesSeries:
    """Monthly instantaneous sales of two brands on an equally spaced grid."""

    t: np.ndarray
    sales1: np.ndarray
    sales2: np.ndarray
    brand_names: tuple = ("brand1", "brand2")

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s1 = np.asarray(self.sales1, dtype=float)
        s2 = np.asarray(self.sales2, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sales1", s1)
        object.__setattr__(self, "sales2", s2)
        object.__setattr__(self, "brand_names", tuple(self.brand_names))
        if not (t.ndim == s1.ndim == s2.ndim == 1 and t.size == s1.size == s2.size):
            raise ValidationError("t, sales1 and sales2 must be 1-D and of equal length")
        if t.size < 2:
            raise ValidationError("at least two months of data are required")
        if len(self.brand_names) != 2:
            raise ValidationError("exactly two brand names are required")
        for name, s in (("sales1", s1), ("sales2", s2)):
            if not np.all(np.isfinite(s)):
                raise ValidationError(f"{name} contains non-finite values")
            if np.any(s < 0):
                raise ValidationError(f"{name} has negative sales at index {int(np.argmax(s < 0))}")
        dt = np.diff(t)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0]):
            raise ValidationError("t must be strictly increasing and equally spaced")
        if t[0] - dt[0] < -1e-12:
            raise ValidationError("the month before the first observation must be t >= 0")

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def spacing(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def cum1(self) -> np.ndarray:
        return np.cumsum(self.sales1)

    @property
    def cum2(self) -> np.ndarray:
        return np.cumsum(self.sales2)

    def scaled(self, factor: float) -> "SalesSeries":
        return SalesSeries(self.t, self.sales1 * factor, self.sales2 * factor, self.brand_names)

    def swapped(self) -> "SalesSeries":
        return SalesSeries(self.t, self.sales2, self.sales1, self.brand_names[::-1])


@dataclass(frozen=True)
class FitConfig:
    model: str = "cdmp"
    fit_scale: str = "cumulative"
    initial_values: Optional[core.CompetitionParams] = None
    max_iterations: int = 500
    tolerance: float = 1e-10
    bounds: Optional[dict] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.fit_scale not in SCALES:
            raise ValidationError(f"fit_scale must be one of {SCALES}, got {self.fit_scale!r}")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.initial_values is not None and self.initial_values.family != self.model:
            raise ValidationError(
                f"initial values describe a {self.initial_values.family!r} potential, "
                f"model is {self.model!r}"
            )


@dataclass(frozen=True)
class FitResult:
    estimates: core.CompetitionParams
    param_names: tuple
    std_errors: Optional[np.ndarray]
    conf_intervals_95: Optional[np.ndarray]
    covariance: Optional[np.ndarray]
    r_squared: float
    rho_squared: float
    residuals_cumulative: np.ndarray
    residuals_instantaneous: np.ndarray
    sse: float
    n_obs: int
    n_params: int
    converged: bool
    iterations: int
    model: str
    fit_scale: str
    data: SalesSeries
    message: str = ""
    sse_history: list = field(default_factory=list, repr=False)

    @property
    def residuals(self) -> np.ndarray:
        """Observed minus fitted, shape ``(2, N)``, on the scale that was fitted."""
        if self.fit_scale == "cumulative":
            return self.residuals_cumulative
        return self.residuals_instantaneous

    @property
    def covariance_available(self) -> bool:
        return self.covariance is not None

    def parameter_table(self) -> list:
        rows = []
        est = self.estimates.to_vector()
        for i, name in enumerate(self.param_names):
            row = {"name": name, "estimate": float(est[i])}
            if self.std_errors is not None:
                row["std_error"] = float(self.std_errors[i])
                row["ci95_lower"] = float(self.conf_intervals_95[i, 0])
                row["ci95_upper"] = float(self.conf_intervals_95[i, 1])
            rows.append(row)
        return rows


class Prediction(NamedTuple):
    t: np.ndarray
    cum1: np.ndarray
    cum2: np.ndarray
    inst1: np.ndarray
    inst2: np.ndarray


def default_initial_values(data: SalesSeries, model: str = "cdmp") -> core.CompetitionParams:
    """Order-of-magnitude starting point for monthly pharmaceutical-like series."""
    total = float(data.cum1[-1] + data.cum2[-1])
    ceiling = 1.5 * total if total > 0 else 1.0
    if model == "cdmp":
        pot = core.GGSqrt(ceiling, 1e-3, 1e-2)
    elif model == "gg-nosqrt":
        pot = core.GGNoSqrt(ceiling, 1e-3, 1e-2)
    elif model == "gamma":
        horizon = float(data.t[-1])
        pot = core.GammaCdf(ceiling, 4.0 / horizon, 2.0)
    elif model == "constant":
        pot = core.Constant(ceiling)
    else:
        raise ValidationError(f"unknown model {model!r}")
    return core.CompetitionParams(pot, p1=1e-3, q1=1e-2, p2=1e-4, q2=1e-2, delta=0.0)


def _model_curves(family: str, x, t_ext):
    params = core.CompetitionParams.from_vector(family, x)
    z1, z2 = core.brand_trajectories(t_ext, params)
    return np.asarray(z1), np.asarray(z2)


def _grid(data: SalesSeries) -> np.ndarray:
    """Observation grid with the preceding (zero-sales) month prepended."""
    start = max(data.t[0] - data.spacing, 0.0)
    return np.concatenate([[start], data.t])


def stacked_residuals(family: str, x, data: SalesSeries, scale: str) -> np.ndarray:
    """Fitted minus observed, brand 1 block then brand 2 block."""
    z1, z2 = _model_curves(family, x, _grid(data))
    if scale == "cumulative":
        return np.concatenate([z1[1:] - data.cum1, z2[1:] - data.cum2])
    return np.concatenate([np.diff(z1) - data.sales1, np.diff(z2) - data.sales2])


def _bounds(params: core.CompetitionParams, user: Optional[dict]):
    names = params.names
    x0 = params.to_vector()
    n_pot = len(params.potential.names)
    lower = np.full(len(names), -np.inf)
    upper = np.full(len(names), np.inf)
    lower[:n_pot] = 1e-12 * np.maximum(np.abs(x0[:n_pot]), 1.0)
    for name, (lo, hi) in (user or {}).items():
        if name not in names:
            raise ValidationError(f"bound given for unknown parameter {name!r}")
        i = names.index(name)
        lower[i] = -np.inf if lo is None else lo
        upper[i] = np.inf if hi is None else hi
    return lower, upper


def goodness_of_fit(observed: SalesSeries, fitted) -> tuple:
    """``(R^2, rho^2)`` of fitted cumulative curves ``(cum1, cum2)``.

    R^2 is centred and computed on the stacked cumulative series; rho^2 is the
    squared Pearson correlation of stacked observed versus fitted monthly sales.
    The fitted curves must start at the first observation month, with zero
    cumulative sales one month earlier.
    """
    f1, f2 = (np.asarray(f, dtype=float) for f in fitted)
    if f1.shape != observed.cum1.shape or f2.shape != observed.cum2.shape:
        raise ValidationError("fitted series must match the observed length")
    obs_cum = np.concatenate([observed.cum1, observed.cum2])
    fit_cum = np.concatenate([f1, f2])
    sst = float(np.sum((obs_cum - obs_cum.mean()) ** 2))
    if sst == 0:
        raise DomainError("observed cumulative series has zero variance")
    r2 = 1.0 - float(np.sum((obs_cum - fit_cum) ** 2)) / sst

    obs_inst = np.concatenate([observed.sales1, observed.sales2])
    fit_inst = np.concatenate([np.diff(f1, prepend=0.0), np.diff(f2, prepend=0.0)])
    a = obs_inst - obs_inst.mean()
    b = fit_inst - fit_inst.mean()
    denom = float(np.sqrt((a @ a) * (b @ b)))
    if denom == 0:
        raise DomainError("monthly sales have zero variance; rho^2 is undefined")
    rho2 = float((a @ b) / denom) ** 2
    return r2, rho2


def _covariance(jac: np.ndarray, sse: float, n_obs: int, k: int):
    if n_obs <= k:
        return None
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        return None
    js = jac / norms
    info = js.T @ js
    if np.linalg.cond(info) > COND_LIMIT:
        return None
    s2 = sse / (n_obs - k)
    cov = s2 * np.linalg.inv(info) / np.outer(norms, norms)
    return 0.5 * (cov + cov.T)


def jacobian(family: str, x, data: SalesSeries, scale: str, rel_step: float = JAC_REL_STEP,
             central: bool = False) -> np.ndarray:
    fun = lambda v: stacked_residuals(family, v, data, scale)  # noqa: E731
    return fd_jacobian(fun, np.asarray(x, float), fun(np.asarray(x, float)), rel_step,
                       JAC_SCALE_FLOOR, central=central)


def fit(data: SalesSeries, config: FitConfig = FitConfig()) -> FitResult:
    family = config.model
    init = config.initial_values or default_initial_values(data, family)
    k = len(init.names)
    if data.n < k / 2 + 2:
        raise ValidationError(f"{data.n} months cannot support {k} parameters")
    lower, upper = _bounds(init, config.bounds)

    def residual_fn(x):
        return stacked_residuals(family, x, data, config.fit_scale)

    try:
        lm = levenberg_marquardt(
            residual_fn, init.to_vector(), lower, upper,
            tol=config.tolerance, max_iter=config.max_iterations,
            rel_step=JAC_REL_STEP, scale_floor=JAC_SCALE_FLOOR,
        )
    except DiffusiaError as exc:
        raise ValidationError(f"initial values are not admissible: {exc}") from exc

    estimates = core.CompetitionParams.from_vector(family, lm.x)
    n_obs = 2 * data.n
    cov = _covariance(lm.jacobian, lm.sse, n_obs, k)
    if cov is not None:
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        ci = np.column_stack([lm.x - Z95 * se, lm.x + Z95 * se])
    else:
        se = ci = None

    pred = predict_params(estimates, data.t, start=_grid(data)[0])
    r2, rho2 = goodness_of_fit(data, (pred.cum1, pred.cum2))
    res_cum = np.vstack([data.cum1 - pred.cum1, data.cum2 - pred.cum2])
    res_inst = np.vstack([data.sales1 - pred.inst1, data.sales2 - pred.inst2])
    return FitResult(
        estimates=estimates, param_names=init.names, std_errors=se, conf_intervals_95=ci,
        covariance=cov, r_squared=r2, rho_squared=rho2,
        residuals_cumulative=res_cum, residuals_instantaneous=res_inst,
        sse=lm.sse, n_obs=n_obs, n_params=k, converged=lm.converged, iterations=lm.iterations,
        model=family, fit_scale=config.fit_scale, data=data, message=lm.message,
        sse_history=lm.sse_history,
    )


def refit(result: FitResult, data: SalesSeries) -> FitResult:
    """Fit ``data`` with the same configuration, warm-started at ``result``."""
    config = FitConfig(model=result.model, fit_scale=result.fit_scale, initial_values=result.estimates)
    return fit(data, config)


def predict_params(params: core.CompetitionParams, t_grid, start: Optional[float] = None) -> Prediction:
    """Cumulative curves on ``t_grid`` and monthly sales as first differences.

    The first difference at ``t_grid[0]`` is taken against ``start`` (default:
    one grid step earlier, floored at launch).
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if start is None:
        step = t[1] - t[0] if t.size > 1 else 1.0
        start = max(t[0] - step, 0.0)
    z1, z2 = core.brand_trajectories(np.concatenate([[start], t]), params)
    z1, z2 = np.asarray(z1), np.asarray(z2)
    return Prediction(t, z1[1:], z2[1:], np.diff(z1), np.diff(z2))


def predict(result: FitResult, t_grid) -> Prediction:
    if not result.converged:
        raise ValidationError("cannot predict from a fit that did not converge")
    return predict_params(result.estimates, t_grid)


def synthetic_series(params: core.CompetitionParams, n_months: int, brand_names=("brand1", "brand2")) -> SalesSeries:
    """Noise-free monthly sales on t = 1..n_months."""
    pred = predict_params(params, np.arange(1, n_months + 1, dtype=float), start=0.0)
    return SalesSeries(pred.t, pred.inst1, pred.inst2, brand_names)


def with_initial(config: FitConfig, params: core.CompetitionParams) -> FitConfig:
    return replace(config, initial_values=params)


_RATE_GRID = ((1e-3, 1e-2), (2.5e-3, 4.5e-2), (1e-2, 1e-1))
_GAMMA_SHAPES = (1.0, 2.0, 4.0)


def _potential_starts(data: SalesSeries, model: str, ceiling: float) -> list:
    if model == "constant":
        return [core.Constant(ceiling)]
    if model == "gamma":
        horizon = float(data.t[-1])
        return [core.GammaCdf(ceiling, shape / (frac * horizon), shape)
                for shape in _GAMMA_SHAPES for frac in (0.25, 0.5)]
    cls = core.GGSqrt if model == "cdmp" else core.GGNoSqrt
    return [cls(ceiling, pc, qc) for pc, qc in _RATE_GRID]


def candidate_starts(data: SalesSeries, model: str, anchor: Optional[core.CompetitionParams] = None) -> list:
    """Starting points for a multi-start fit of ``model``.

    ``anchor`` (typically a converged constant-potential fit) donates its
    competition coefficients and ceiling; the default coefficients are always
    tried as well.
    """
    default = default_initial_values(data, model)
    coefs = [default.coefficients()]
    ceilings = [default.potential.ceiling]
    if anchor is not None:
        coefs.append(anchor.coefficients())
        ceilings.append(1.2 * anchor.potential.ceiling)
    starts = [default]
    for c, ceiling in zip(coefs, ceilings):
        for pot in _potential_starts(data, model, ceiling):
            try:
                starts.append(core.CompetitionParams(pot, *c))
            except DomainError:
                continue
    return starts


def fit_multistart(data: SalesSeries, config: FitConfig = FitConfig(), starts=None) -> FitResult:
    """Best (lowest SSE) fit over several starting points; converged fits win."""
    if starts is None:
        starts = candidate_starts(data, config.model)
    if config.initial_values is not None:
        starts = [config.initial_values, *starts]
    best = None
    for start in starts:
        try:
            res = fit(data, replace(config, initial_values=start))
        except ValidationError:
            continue
        key = (not res.converged, res.sse)
        if best is None or key < (not best.converged, best.sse):
            best = res
    if best is None:
        raise ValidationError("no starting point produced an admissible fit")
    return best

"""Two-brand innovation diffusion with a dynamic market potential.

Closed-form trajectories, an RK4 oracle, joint nonlinear least squares,
nested-model comparison, forecasting bands, seasonal residual refinement and
a Monte Carlo reliability study.
"""
from ._accel import backend_name
from .core import (
    REFERENCE_PARAMS,
    BassParams,
    CompetitionParams,
    Constant,
    GammaCdf,
    GGNoSqrt,
    GGSqrt,
    aux_y,
    bass_cumulative,
    bass_w,
    brand_trajectories,
    effective_coefficients,
    instantaneous_rates,
    market_potential,
    market_potential_derivative,
    power_ratio,
)
from .errors import DiffusiaError, DomainError, IntegrationError, RefinementError, ValidationError
from .estimation import FitConfig, FitResult, SalesSeries, fit, fit_multistart, goodness_of_fit, predict
from .forecasting import ForecastBand, SarmaConfig, fit_sarma, fit_sarma_refinement, forecast_bands
from .oracle import IntegrationConfig, integrate_competition, integrate_univariate
from .selection import ModelComparison, compare_potentials, f_ratio, partial_r2
from .simulation import SimReport, SimScenario, generate, run_study

__version__ = "0.1.0"

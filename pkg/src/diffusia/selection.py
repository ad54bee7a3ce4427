"""Nested-model F comparison and the market-potential comparison table."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from . import core
from .errors import DiffusiaError, DomainError
from .estimation import FitConfig, FitResult, SalesSeries, candidate_starts, fit_multistart

ROBUST_THRESHOLD = 4.0
#: Parameters lost when the square-root potential collapses to a constant.
CONSTANT_NESTING_S = 2
#: Awareness rates so fast that the square-root potential equals K from month one.
_SATURATED_RATE = 50.0


def partial_r2(r2_full: float, r2_reduced: float) -> float:
    """Share of the reduced model's unexplained variation removed by the full model."""
    if r2_reduced >= 1:
        raise DomainError("reduced model already fits perfectly; partial R^2 undefined")
    return (r2_full - r2_reduced) / (1.0 - r2_reduced)


def f_ratio(r2_partial: float, n_obs: int, k_full: int, s: int) -> float:
    if n_obs <= k_full:
        raise DomainError(f"need more observations ({n_obs}) than parameters ({k_full})")
    if s < 1:
        raise DomainError("at least one parameter must be dropped (s >= 1)")
    if not 0 <= r2_partial < 1:
        raise DomainError(f"partial R^2 must lie in [0, 1), got {r2_partial}")
    return r2_partial * (n_obs - k_full) / ((1.0 - r2_partial) * s)


@dataclass(frozen=True)
class ModelComparison:
    r2_full: float
    r2_reduced: float
    n_obs: int
    k_full: int
    s: int
    r2_partial: float
    f_stat: float
    exceeds_robust_threshold: bool

    @classmethod
    def from_r2(cls, r2_full: float, r2_reduced: float, n_obs: int, k_full: int, s: int) -> "ModelComparison":
        rp = partial_r2(r2_full, r2_reduced)
        f = f_ratio(rp, n_obs, k_full, s)
        return cls(r2_full, r2_reduced, n_obs, k_full, s, rp, f, f > ROBUST_THRESHOLD)


def compare_fits(full: FitResult, reduced: FitResult, s: int) -> ModelComparison:
    if full.n_obs != reduced.n_obs:
        raise DomainError("nested fits must use the same observations")
    return ModelComparison.from_r2(full.r_squared, reduced.r_squared, full.n_obs, full.n_params, s)


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    r_squared: Optional[float]
    rho_squared: Optional[float]
    converged: bool
    fit: Optional[FitResult] = None
    f_test: Optional[ModelComparison] = None
    error: Optional[str] = None


def default_specs(fit_scale: str = "cumulative") -> list:
    return [FitConfig(model=m, fit_scale=fit_scale) for m in ("cdmp", "constant", "gg-nosqrt", "gamma")]


def _nest_constant(params: core.CompetitionParams) -> core.CompetitionParams:
    """Constant-potential estimates re-expressed as a saturated square-root potential."""
    pot = core.GGSqrt(params.potential.ceiling, _SATURATED_RATE, _SATURATED_RATE)
    return core.CompetitionParams(pot, *params.coefficients())


def compare_potentials(data: SalesSeries, specs: Optional[Sequence[FitConfig]] = None) -> list:
    """One row per spec, in the given order.

    The constant-potential fit is computed first and used to seed the other
    fits.  The square-root fit is also started from the constant optimum so
    that it can never end up below the model nested inside it.  A failed fit
    fills its row with ``error`` and the table carries on.
    """
    specs = list(specs) if specs is not None else default_specs()
    scales = {s.fit_scale for s in specs}
    anchors = {}
    for scale in scales:
        const_spec = next((s for s in specs if s.model == "constant" and s.fit_scale == scale),
                          FitConfig(model="constant", fit_scale=scale))
        try:
            anchors[scale] = fit_multistart(data, const_spec)
        except DiffusiaError:
            anchors[scale] = None

    fits = {}
    rows = []
    for spec in specs:
        anchor = anchors.get(spec.fit_scale)
        try:
            if spec.model == "constant" and anchor is not None and spec.initial_values is None:
                result = anchor
            else:
                starts = candidate_starts(data, spec.model, anchor.estimates if anchor else None)
                if spec.model == "cdmp" and anchor is not None:
                    starts.append(_nest_constant(anchor.estimates))
                result = fit_multistart(data, spec, starts)
        except DiffusiaError as exc:
            rows.append(ComparisonRow(spec.model, None, None, False, error=str(exc)))
            continue
        fits[(spec.model, spec.fit_scale)] = result
        rows.append(ComparisonRow(spec.model, result.r_squared, result.rho_squared, result.converged, result))

    out = []
    for row in rows:
        full = fits.get(("cdmp", row.fit.fit_scale)) if row.fit is not None else None
        if row.model == "constant" and full is not None:
            try:
                row = replace(row, f_test=compare_fits(full, row.fit, CONSTANT_NESTING_S))
            except DomainError as exc:
                row = replace(row, error=f"F-test unavailable: {exc}")
        out.append(row)
    return out

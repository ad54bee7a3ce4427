"""Synthetic sales and the Monte Carlo reliability study."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import core
from .errors import DiffusiaError, ValidationError
from .estimation import FitConfig, SalesSeries, candidate_starts, fit, fit_multistart, predict_params
from .io import fmt, write_json

NOISE_MODELS = ("additive", "multiplicative")

NOISE_DECLARATION = (
    "Gaussian noise is added to monthly (instantaneous) sales and cumulated; "
    "additive noise has a constant sd equal to noise_to_signal times the brand's mean "
    "absolute monthly sales, multiplicative noise has sd proportional to each month's sales; "
    "negative draws are truncated at zero. Replication counts, noise grid and metrics are "
    "package defaults, not values taken from a published study."
)

#: Published potential and word-of-mouth estimates with a positive brand-2
#: innovation coefficient, so that simulated monthly sales stay non-negative.
DEFAULT_TRUE_PARAMS = core.CompetitionParams(
    core.GGSqrt(K=4.8669e7, p_c=2.3837e-3, q_c=4.5235e-2),
    p1=3.2004e-3,
    q1=1.4277e-2,
    p2=5.0e-4,
    q2=1.2709e-3,
    delta=-2.2248e-2,
)


@dataclass(frozen=True)
class SimScenario:
    true_params: core.CompetitionParams = DEFAULT_TRUE_PARAMS
    n_months: int = 188
    noise_to_signal: float = 0.02
    noise_model: str = "additive"
    replications: int = 100
    seed: int = 0
    fitted_model: Optional[FitConfig] = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if self.n_months < 24:
            raise ValidationError("n_months must be at least 24")
        if not self.noise_to_signal >= 0:
            raise ValidationError("noise_to_signal must be non-negative")
        if self.noise_model not in NOISE_MODELS:
            raise ValidationError(f"noise_model must be one of {NOISE_MODELS}")
        if self.fitted_model is None:
            object.__setattr__(self, "fitted_model",
                               FitConfig(model=self.true_params.family, fit_scale="instantaneous"))

    @property
    def misspecified(self) -> bool:
        return self.fitted_model.model != self.true_params.family

    def header(self) -> dict:
        return {
            "true_family": self.true_params.family,
            "true_params": self.true_params.as_dict(),
            "n_months": self.n_months,
            "noise_to_signal": self.noise_to_signal,
            "noise_model": self.noise_model,
            "replications": self.replications,
            "seed": self.seed,
            "fitted_model": self.fitted_model.model,
            "fit_scale": self.fitted_model.fit_scale,
            "misspecified": self.misspecified,
            "noise_mechanism": NOISE_DECLARATION,
        }


def signal(scenario: SimScenario) -> SalesSeries:
    """Noise-free monthly sales; negative model sales are floored at zero."""
    t = np.arange(1, scenario.n_months + 1, dtype=float)
    pred = predict_params(scenario.true_params, t, start=0.0)
    return SalesSeries(t, np.clip(pred.inst1, 0, None), np.clip(pred.inst2, 0, None))


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent stream per (seed, replication), identical in any execution order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replication,)))


def generate(scenario: SimScenario, replication: int) -> SalesSeries:
    t = np.arange(1, scenario.n_months + 1, dtype=float)
    pred = predict_params(scenario.true_params, t, start=0.0)
    rng = replication_rng(scenario.seed, replication)
    out = []
    for sig in (pred.inst1, pred.inst2):
        if scenario.noise_model == "additive":
            sd = scenario.noise_to_signal * np.mean(np.abs(sig))
        else:
            sd = scenario.noise_to_signal * np.abs(sig)
        draw = sig + sd * rng.standard_normal(sig.size)
        out.append(np.clip(draw, 0.0, None))
    return SalesSeries(t, out[0], out[1])


@dataclass
class SimReport:
    header: dict
    param_names: list
    true_values: list
    bias: list
    relative_bias: list
    relative_rmse: list
    coverage: list
    convergence_rate: float
    n_converged: int
    mean_r_squared: Optional[float]
    mean_rho_squared: Optional[float]
    replications: list = field(default_factory=list)

    def metric(self, name: str) -> dict:
        return dict(zip(self.param_names, getattr(self, name)))

    def to_json(self, path, include_replications: bool = False) -> None:
        payload = asdict(self)
        if not include_replications:
            payload.pop("replications")
        write_json(path, payload)

    def to_csv(self, path) -> None:
        cols = ["replication", "converged", "r_squared", "rho_squared", "sse"]
        cols += [f"est_{n}" for n in self.param_names] + [f"se_{n}" for n in self.param_names]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for rep in self.replications:
                row = [rep["replication"], int(rep["converged"])]
                row += [_fmt(rep.get(k)) for k in ("r_squared", "rho_squared", "sse")]
                est = rep.get("estimates") or {}
                se = rep.get("std_errors") or {}
                row += [_fmt(est.get(n)) for n in self.param_names]
                row += [_fmt(se.get(n)) for n in self.param_names]
                writer.writerow(row)


def _fmt(v) -> str:
    return "" if v is None else fmt(v)


def _fit_one(scenario: SimScenario, replication: int) -> dict:
    data = generate(scenario, replication)
    cfg = scenario.fitted_model
    record = {"replication": replication, "converged": False}
    try:
        if scenario.misspecified:
            res = fit_multistart(data, cfg, candidate_starts(data, cfg.model))
        else:
            start = cfg.initial_values or scenario.true_params
            res = fit(data, FitConfig(cfg.model, cfg.fit_scale, start, cfg.max_iterations,
                                      cfg.tolerance, cfg.bounds))
    except DiffusiaError as exc:
        record["error"] = str(exc)
        return record
    record.update(
        converged=bool(res.converged),
        r_squared=res.r_squared,
        rho_squared=res.rho_squared,
        sse=res.sse,
        estimates=res.estimates.as_dict(),
        std_errors=None if res.std_errors is None else dict(zip(res.param_names, res.std_errors.tolist())),
    )
    return record


def _run_chunk(args):
    scenario, reps = args
    return [_fit_one(scenario, r) for r in reps]


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("DIFFUSIA_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(int(cap), 1))
    return max(n, 1)


def run_study(scenario: SimScenario, workers: Optional[int] = None) -> SimReport:
    """Generate, fit and score every replication; aggregate into a report.

    Replications that fail or do not converge are counted and excluded from
    bias, RMSE and coverage.  Coverage is only defined when the fitted
    potential family matches the true one.
    """
    reps = list(range(scenario.replications))
    n_workers = min(worker_count(workers), len(reps))
    if n_workers > 1:
        chunks = [reps[i::n_workers] for i in range(n_workers)]
        with ProcessPoolExecutor(n_workers) as pool:
            parts = list(pool.map(_run_chunk, [(scenario, c) for c in chunks]))
        records = sorted((r for part in parts for r in part), key=lambda r: r["replication"])
    else:
        records = [_fit_one(scenario, r) for r in reps]
    return summarize(scenario, records)


def summarize(scenario: SimScenario, records: list) -> SimReport:
    truth = scenario.true_params.as_dict()
    fitted_names = [f.name for f in fields(core.POTENTIALS[scenario.fitted_model.model])]
    fitted_names = list(fitted_names) + list(core.BRAND_NAMES)
    names = [n for n in fitted_names if n in truth]
    true_vals = np.array([truth[n] for n in names])

    ok = [r for r in records if r["converged"]]
    n_ok = len(ok)
    if n_ok:
        est = np.array([[r["estimates"][n] for n in names] for r in ok])
        err = est - true_vals
        bias = err.mean(axis=0)
        rel_rmse = np.sqrt((err**2).mean(axis=0)) / np.abs(true_vals)
        rel_bias = bias / np.abs(true_vals)
        with_se = [r for r in ok if r.get("std_errors")]
        if with_se and not scenario.misspecified:
            hits = np.array([[abs(r["estimates"][n] - truth[n]) <= 1.96 * r["std_errors"][n] for n in names]
                             for r in with_se])
            coverage = hits.mean(axis=0).tolist()
        else:
            coverage = [None] * len(names)
        mean_r2 = float(np.mean([r["r_squared"] for r in ok]))
        mean_rho2 = float(np.mean([r["rho_squared"] for r in ok]))
    else:
        bias = rel_rmse = rel_bias = np.full(len(names), np.nan)
        coverage = [None] * len(names)
        mean_r2 = mean_rho2 = None
    return SimReport(
        header=scenario.header(),
        param_names=names,
        true_values=true_vals.tolist(),
        bias=bias.tolist(),
        relative_bias=rel_bias.tolist(),
        relative_rmse=rel_rmse.tolist(),
        coverage=coverage,
        convergence_rate=n_ok / len(records),
        n_converged=n_ok,
        mean_r_squared=mean_r2,
        mean_rho_squared=mean_rho2,
        replications=records,
    )

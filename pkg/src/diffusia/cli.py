"""Command-line interface: ``diffusia {fit,compare,forecast,simulate,oracle-check}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import core, oracle
from .errors import DiffusiaError, DomainError, IntegrationError, ValidationError
from .estimation import FitConfig, candidate_starts, default_initial_values, fit_multistart, predict_params
from .forecasting import SarmaConfig, fit_sarma_refinement, forecast_bands
from .io import ingest, write_csv, write_json
from .selection import compare_potentials, default_specs
from .simulation import DEFAULT_TRUE_PARAMS, SimScenario, run_study

log = logging.getLogger("diffusia")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_CONVERGENCE = 5
EXIT_ORACLE = 6

COMMANDS = ("fit", "compare", "forecast", "simulate", "oracle-check")


@dataclass
class RunConfig:
    command: str
    input_path: Optional[Path]
    output_dir: Path
    model: str = "cdmp"
    scale: str = "cumulative"
    init: dict = field(default_factory=dict)
    tolerance: float = 1e-10
    max_iter: int = 500
    horizon: int = 12
    level: float = 0.95
    band_scale: str = "instantaneous"
    sarma: Optional[SarmaConfig] = None
    seed: int = 0
    replications: int = 100
    noise: float = 0.02
    noise_model: str = "additive"
    n_months: int = 188
    oracle_tol: float = 1e-6
    step: float = 0.01

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.command not in ("simulate", "oracle-check") and self.input_path is None:
            raise ValidationError(f"{self.command} requires an input CSV")


def _parse_init(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--init expects key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ValidationError(f"--init {key}: {value!r} is not a number") from None
    return out


def _apply_init(base: core.CompetitionParams, init: dict, family: Optional[str] = None) -> core.CompetitionParams:
    family = family or base.family
    if family != base.family:
        names = [f.name for f in fields(core.POTENTIALS[family])]
        missing = [n for n in names if n not in init]
        if missing:
            raise ValidationError(f"--init must set {missing} for a {family} potential")
        values = {n: init[n] for n in names}
        values.update({n: getattr(base, n) for n in core.BRAND_NAMES})
    else:
        values = base.as_dict()
    for key, v in init.items():
        if key not in values:
            raise ValidationError(f"--init: unknown parameter {key!r} for model {family}")
        values[key] = v
    pot_names = list([f.name for f in fields(core.POTENTIALS[family])])
    return core.CompetitionParams.from_vector(family, [values[n] for n in pot_names + list(core.BRAND_NAMES)])


def _fit(cfg: RunConfig, data):
    config = FitConfig(model=cfg.model, fit_scale=cfg.scale, max_iterations=cfg.max_iter, tolerance=cfg.tolerance)
    if cfg.init:
        config = FitConfig(cfg.model, cfg.scale, _apply_init(default_initial_values(data, cfg.model), cfg.init),
                           cfg.max_iter, cfg.tolerance)
        return fit_multistart(data, config, starts=[])
    anchor = None
    if cfg.model != "constant":
        anchor = fit_multistart(data, FitConfig("constant", cfg.scale, None, cfg.max_iter, cfg.tolerance)).estimates
    return fit_multistart(data, config, candidate_starts(data, cfg.model, anchor))


def fit_report(result) -> dict:
    eff = core.effective_coefficients(result.estimates)._asdict()
    return {
        "model": result.model,
        "fit_scale": result.fit_scale,
        "brands": list(result.data.brand_names),
        "parameters": result.parameter_table(),
        "effective_coefficients": eff,
        "r_squared": result.r_squared,
        "rho_squared": result.rho_squared,
        "sse": result.sse,
        "n_obs": result.n_obs,
        "n_params": result.n_params,
        "converged": result.converged,
        "iterations": result.iterations,
        "message": result.message,
        "covariance": None if result.covariance is None else result.covariance.tolist(),
    }


def _cmd_fit(cfg: RunConfig) -> int:
    data = ingest(cfg.input_path)
    result = _fit(cfg, data)
    write_json(cfg.output_dir / "fit_report.json", fit_report(result))
    pred = predict_params(result.estimates, data.t)
    b1, b2 = data.brand_names
    write_csv(cfg.output_dir / "fitted_curves.csv", {
        "t": data.t.astype(int),
        f"{b1}_observed": data.sales1,
        f"{b1}_fitted": pred.inst1,
        f"{b2}_observed": data.sales2,
        f"{b2}_fitted": pred.inst2,
        f"{b1}_cum_observed": data.cum1,
        f"{b1}_cum_fitted": pred.cum1,
        f"{b2}_cum_observed": data.cum2,
        f"{b2}_cum_fitted": pred.cum2,
    })
    write_csv(cfg.output_dir / "potential_curve.csv", {
        "t": data.t.astype(int),
        "m_hat": core.market_potential(data.t, result.estimates.potential),
    })
    log.info("fit %s: R2=%.6f rho2=%.6f converged=%s", result.model, result.r_squared,
             result.rho_squared, result.converged)
    return EXIT_OK if result.converged else EXIT_CONVERGENCE


def _cmd_compare(cfg: RunConfig) -> int:
    data = ingest(cfg.input_path)
    rows = compare_potentials(data, default_specs(cfg.scale))
    out = []
    for row in rows:
        entry = {"model": row.model, "r_squared": row.r_squared, "rho_squared": row.rho_squared,
                 "converged": row.converged, "error": row.error, "f_test": None}
        if row.f_test is not None:
            entry["f_test"] = {
                "against": "cdmp", "r2_partial": row.f_test.r2_partial, "f_stat": row.f_test.f_stat,
                "n_obs": row.f_test.n_obs, "k_full": row.f_test.k_full, "s": row.f_test.s,
                "exceeds_robust_threshold": row.f_test.exceeds_robust_threshold,
            }
        out.append(entry)
    write_json(cfg.output_dir / "comparison.json", {"fit_scale": cfg.scale, "rows": out})
    return EXIT_OK if all(r.converged for r in rows) else EXIT_CONVERGENCE


def _cmd_forecast(cfg: RunConfig) -> int:
    data = ingest(cfg.input_path)
    result = _fit(cfg, data)
    if not result.converged:
        return EXIT_CONVERGENCE
    band = forecast_bands(result, cfg.horizon, cfg.level, scale=cfg.band_scale)
    b1, b2 = data.brand_names
    cols = {"t": band.t_grid.astype(int)}
    for i, b in enumerate((b1, b2)):
        cols[f"{b}_mean"] = band.mean[i]
        cols[f"{b}_lower"] = band.lower[i]
        cols[f"{b}_upper"] = band.upper[i]
    if cfg.sarma is not None:
        ref = fit_sarma_refinement(result.residuals_instantaneous, cfg.sarma, cfg.horizon)
        adj = ref.forecasts if cfg.band_scale == "instantaneous" else np.cumsum(ref.forecasts, axis=1)
        for i, b in enumerate((b1, b2)):
            cols[f"{b}_refined"] = band.mean[i] + adj[i]
    write_csv(cfg.output_dir / "forecast_bands.csv", cols)
    if not band.has_band:
        log.warning("parameter covariance unavailable: mean-only forecast")
    return EXIT_OK


def _cmd_simulate(cfg: RunConfig) -> int:
    truth = _apply_init(DEFAULT_TRUE_PARAMS, cfg.init) if cfg.init else DEFAULT_TRUE_PARAMS
    scenario = SimScenario(
        true_params=truth, n_months=cfg.n_months, noise_to_signal=cfg.noise, noise_model=cfg.noise_model,
        replications=cfg.replications, seed=cfg.seed,
        fitted_model=FitConfig(cfg.model, cfg.scale, None, cfg.max_iter, cfg.tolerance),
    )
    report = run_study(scenario)
    report.to_json(cfg.output_dir / "sim_report.json")
    report.to_csv(cfg.output_dir / "sim_replications.csv")
    return EXIT_OK


def _cmd_oracle(cfg: RunConfig) -> int:
    if cfg.input_path is not None:
        result = _fit(cfg, ingest(cfg.input_path))
        params = result.estimates
    elif cfg.model == "cdmp":
        params = _apply_init(core.REFERENCE_PARAMS, cfg.init)
    else:
        params = _apply_init(core.REFERENCE_PARAMS, cfg.init, family=cfg.model)
    t_end = float(cfg.n_months)
    t_start = oracle.DEFAULT_START
    check = oracle.max_relative_deviation(params, t_end=t_end, step=cfg.step, t_start=t_start)
    ok = check.max_rel_error < cfg.oracle_tol
    write_json(cfg.output_dir / "oracle_check.json", {
        "parameters": params.as_dict(), "model": params.family, "t_start": t_start, "t_end": t_end,
        "step": cfg.step, "n_points": check.n_points, "max_rel_error": check.max_rel_error,
        "max_rel_error_brand1": check.max_rel_error_brand1, "max_rel_error_brand2": check.max_rel_error_brand2,
        "tolerance": cfg.oracle_tol, "passed": ok,
    })
    print(f"max relative deviation {check.max_rel_error:.3e} (tolerance {cfg.oracle_tol:g}): "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ORACLE


_HANDLERS = {"fit": _cmd_fit, "compare": _cmd_compare, "forecast": _cmd_forecast,
             "simulate": _cmd_simulate, "oracle-check": _cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output-dir", default=".", type=Path)
    common.add_argument("--model", choices=["cdmp", "constant", "gg-nosqrt", "gamma"], default="cdmp")
    common.add_argument("--scale", choices=["cumulative", "instantaneous"], default=None)
    common.add_argument("--init", nargs="+", metavar="KEY=VALUE", default=[])
    common.add_argument("--tolerance", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=500)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="diffusia", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a model to a sales CSV")
    p.add_argument("input", type=Path)

    p = sub.add_parser("compare", parents=[common], help="compare the four market-potential specifications")
    p.add_argument("input", type=Path)

    p = sub.add_parser("forecast", parents=[common], help="forecast with confidence bands")
    p.add_argument("input", type=Path)
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--band-scale", choices=["cumulative", "instantaneous"], default="instantaneous")
    p.add_argument("--sarma", metavar="P,Q,SP,SQ", default=None)
    p.add_argument("--season", type=int, default=12)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo reliability study")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.02, help="noise-to-signal ratio")
    p.add_argument("--noise-model", choices=["additive", "multiplicative"], default="additive")
    p.add_argument("--months", type=int, default=188)

    p = sub.add_parser("oracle-check", parents=[common], help="closed form versus RK4 integration")
    p.add_argument("input", type=Path, nargs="?", default=None)
    p.add_argument("--months", type=int, default=188)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--oracle-tol", type=float, default=1e-6)
    return parser


def config_from_args(args) -> RunConfig:
    scale = args.scale or ("instantaneous" if args.command == "simulate" else "cumulative")
    kw = dict(command=args.command, input_path=getattr(args, "input", None), output_dir=args.output_dir,
              model=args.model, scale=scale, init=_parse_init(args.init), tolerance=args.tolerance,
              max_iter=args.max_iter)
    if args.command == "forecast":
        kw.update(horizon=args.horizon, level=args.level, band_scale=args.band_scale,
                  sarma=SarmaConfig.parse(args.sarma, args.season) if args.sarma else None)
    if args.command == "simulate":
        kw.update(seed=args.seed, replications=args.replications, noise=args.noise,
                  noise_model=args.noise_model, n_months=args.months)
    if args.command == "oracle-check":
        kw.update(n_months=args.months, step=args.step, oracle_tol=args.oracle_tol)
    return RunConfig(**kw)


def run(cfg: RunConfig) -> int:
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", cfg.output_dir, exc)
        return EXIT_IO
    try:
        return _HANDLERS[cfg.command](cfg)
    except (ValidationError, DomainError) as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except IntegrationError as exc:
        log.error("oracle integration failed: %s", exc)
        return EXIT_ORACLE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except DiffusiaError as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ValidationError as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

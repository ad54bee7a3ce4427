"""Fixed-step RK4 integration of the diffusion ODEs.

This is the brute-force reference the closed forms are certified against.  It
never calls the closed-form trajectories except when asked to seed an initial
state away from launch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import core, kernels
from .errors import DomainError, IntegrationError

DEFAULT_START = 0.5
ENVELOPE_RTOL = 1e-6


@dataclass(frozen=True)
class IntegrationConfig:
    t_start: float
    t_end: float
    step: float
    initial_state: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.t_start >= 0 and self.t_end > self.t_start):
            raise DomainError(f"need t_end > t_start >= 0, got [{self.t_start}, {self.t_end}]")
        if not 0 < self.step <= self.t_end - self.t_start:
            raise DomainError(f"step {self.step} outside (0, t_end - t_start]")

    @property
    def n_steps(self) -> int:
        return int(math.ceil((self.t_end - self.t_start) / self.step - 1e-9))


class Trajectory(NamedTuple):
    t: np.ndarray
    z1: np.ndarray
    z2: np.ndarray


class UnivariateTrajectory(NamedTuple):
    t: np.ndarray
    z: np.ndarray


def seeded_config(params, t_end: float, step: float, t_start: float = DEFAULT_START) -> IntegrationConfig:
    """Start at ``t_start`` with the state taken from the closed form.

    Used for the square-root potential, whose ``m'/m`` blows up at launch.
    """
    z1, z2 = core.brand_trajectories(t_start, params)
    return IntegrationConfig(t_start, t_end, step, (z1, z2))


def _needs_late_start(potential) -> bool:
    if isinstance(potential, core.GGSqrt):
        return True
    return isinstance(potential, core.GammaCdf) and potential.alpha1 <= 1.0


def _check_start(potential, config: IntegrationConfig, total0: float):
    if config.t_start == 0 and _needs_late_start(potential):
        raise DomainError("this potential has an infinite m'/m at t = 0; start at t > 0")
    if config.t_start == 0 and not isinstance(potential, core.Constant):
        # m(0) = 0 for every dynamic potential; the system is only defined for t > 0
        raise DomainError("dynamic potentials vanish at t = 0; start at t > 0")
    m0 = float(core.market_potential(config.t_start, potential))
    if total0 < -ENVELOPE_RTOL * m0 or total0 > m0 * (1 + ENVELOPE_RTOL):
        raise DomainError(f"initial cumulative {total0} outside [0, m(t_start)={m0}]")


def _check_envelope(t, total, potential):
    m = np.asarray(core.market_potential(t, potential))
    if not np.all(np.isfinite(total)):
        raise IntegrationError("integration produced non-finite values")
    over = total > m * (1 + ENVELOPE_RTOL)
    under = total < -ENVELOPE_RTOL * m
    bad = over | under
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IntegrationError(
            f"category sales {total[i]:.6g} left [0, m(t)={m[i]:.6g}] at t={t[i]:.6g}; "
            "parameters are invalid or the step is too large"
        )


def integrate_competition(params: core.CompetitionParams, config: IntegrationConfig) -> Trajectory:
    """RK4 trajectory of the two-brand system, sampled at every step.

    Individual brands may dip below zero when an innovation coefficient is
    negative; only the category total is held to the ``[0, m(t)]`` envelope.
    """
    pot = params.potential
    z10, z20 = (float(v) for v in config.initial_state)
    _check_start(pot, config, z10 + z20)
    t, z1, z2 = kernels.rk4_competition(
        pot.kind, pot.as_array(), params.coefficients(),
        float(config.t_start), z10, z20, float(config.step), config.n_steps,
    )
    _check_envelope(t, z1 + z2, pot)
    return Trajectory(t, z1, z2)


def integrate_univariate(potential, p_s: float, q_s: float, config: IntegrationConfig) -> UnivariateTrajectory:
    """RK4 trajectory of the single-process dynamic-potential equation."""
    if not p_s > 0 or not q_s >= 0:
        raise DomainError(f"need p_s > 0 and q_s >= 0, got {p_s}, {q_s}")
    z0 = float(config.initial_state[0])
    _check_start(potential, config, z0)
    t, z = kernels.rk4_univariate(
        potential.kind, potential.as_array(), float(p_s), float(q_s),
        float(config.t_start), z0, float(config.step), config.n_steps,
    )
    _check_envelope(t, z, potential)
    return UnivariateTrajectory(t, z)


class OracleCheck(NamedTuple):
    max_rel_error: float
    max_rel_error_brand1: float
    max_rel_error_brand2: float
    n_points: int


def max_relative_deviation(params: core.CompetitionParams, t_end: float = 188.0, step: float = 0.01,
                           t_start: Optional[float] = None) -> OracleCheck:
    """Largest pointwise relative gap between RK4 and the closed form."""
    if t_start is None:
        t_start = DEFAULT_START
    config = seeded_config(params, t_end, step, t_start)
    traj = integrate_competition(params, config)
    c1, c2 = core.brand_trajectories(traj.t, params)
    e1 = np.abs(traj.z1 - c1) / np.maximum(np.abs(c1), np.finfo(float).tiny)
    e2 = np.abs(traj.z2 - c2) / np.maximum(np.abs(c2), np.finfo(float).tiny)
    return OracleCheck(float(max(e1.max(), e2.max())), float(e1.max()), float(e2.max()), len(traj.t))


def max_abs_deviation(params: core.CompetitionParams, step: float, t_end: float = 188.0,
                      t_start: float = DEFAULT_START) -> float:
    traj = integrate_competition(params, seeded_config(params, t_end, step, t_start))
    c1, c2 = core.brand_trajectories(traj.t, params)
    return float(max(np.max(np.abs(traj.z1 - c1)), np.max(np.abs(traj.z2 - c2))))


def convergence_orders(params: core.CompetitionParams, steps=(2**-3, 2**-4, 2**-5, 2**-6, 2**-7),
                       t_end: float = 188.0, t_start: float = DEFAULT_START) -> np.ndarray:
    """Observed orders ``log2(e(h) / e(h/2))`` over successive step halvings.

    Steps should be small against ``t_start`` (the square-root potential has
    ``m'/m ~ 1/(2t)``) and large enough that the error stays above the
    rounding floor of the closed form.
    """
    steps = np.asarray(steps, dtype=float)
    if steps.size < 2 or not np.allclose(steps[:-1] / steps[1:], 2.0):
        raise DomainError("steps must be a dyadic sequence of at least two halvings")
    errs = np.array([max_abs_deviation(params, h, t_end, t_start) for h in steps])
    return np.log2(errs[:-1] / errs[1:])

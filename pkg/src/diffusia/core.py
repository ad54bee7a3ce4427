"""Closed-form curves: Bass, dynamic market potentials, two-brand trajectories.

All functions accept a scalar or array time argument and broadcast with numpy.
Time is measured in months since launch; cumulative sales are zero at t = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import ClassVar, NamedTuple, Union

import numpy as np

from . import kernels
from .errors import DomainError

#: Half-width of the window around delta = 0 and delta = q_s where the
#: dedicated limit formulas replace the general one.
DELTA_EPS = 1e-9


def _as_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)):
        raise DomainError("time contains NaN")
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    return t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class BassParams:
    m: float
    p: float
    q: float

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"market potential m must be positive, got {self.m}")
        if not self.p > 0:
            raise DomainError(f"innovation coefficient p must be positive, got {self.p}")
        if not self.q >= 0:
            raise DomainError(f"imitation coefficient q must be non-negative, got {self.q}")


# -- market potentials -------------------------------------------------------


class _Potential:
    kind: ClassVar[int]
    family: ClassVar[str]

    @property
    def names(self) -> tuple:
        return tuple(f.name for f in fields(self))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names], dtype=float)

    @property
    def ceiling(self) -> float:
        return float(self.as_array()[0])

    def _check_positive(self):
        for name in self.names:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{type(self).__name__}.{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class Constant(_Potential):
    """Fixed market potential ``m``."""

    m: float
    kind: ClassVar[int] = kernels.CONSTANT
    family: ClassVar[str] = "constant"

    def __post_init__(self):
        self._check_positive()


@dataclass(frozen=True)
class GGSqrt(_Potential):
    """``K * sqrt(w(t; p_c, q_c))``: potential driven by a latent awareness network."""

    K: float
    p_c: float
    q_c: float
    kind: ClassVar[int] = kernels.GG_SQRT
    family: ClassVar[str] = "cdmp"

    def __post_init__(self):
        self._check_positive()


@dataclass(frozen=True)
class GGNoSqrt(_Potential):
    """``K * w(t; p_c, q_c)``, the square-root-free variant."""

    K: float
    p_c: float
    q_c: float
    kind: ClassVar[int] = kernels.GG_NOSQRT
    family: ClassVar[str] = "gg-nosqrt"

    def __post_init__(self):
        self._check_positive()


@dataclass(frozen=True)
class GammaCdf(_Potential):
    """``K * P(alpha1, alpha0 * t)``, a Gamma(shape=alpha1, rate=alpha0) CDF."""

    K: float
    alpha0: float
    alpha1: float
    kind: ClassVar[int] = kernels.GAMMA_CDF
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        self._check_positive()


PotentialSpec = Union[Constant, GGSqrt, GGNoSqrt, GammaCdf]

POTENTIALS = {cls.family: cls for cls in (GGSqrt, Constant, GGNoSqrt, GammaCdf)}


# -- competition parameters --------------------------------------------------

BRAND_NAMES = ("p1", "q1", "p2", "q2", "delta")


@dataclass(frozen=True)
class CompetitionParams:
    """Potential plus the five competition coefficients.

    Individual coefficients are sign-free; only the sums ``p_s = p1 + p2`` and
    ``q_s = q1 + q2`` must be positive.
    """

    potential: PotentialSpec
    p1: float
    q1: float
    p2: float
    q2: float
    delta: float

    def __post_init__(self):
        coefs = (self.p1, self.q1, self.p2, self.q2, self.delta)
        if not all(math.isfinite(c) for c in coefs):
            raise DomainError(f"non-finite competition coefficient in {coefs}")
        if not self.p_s > 0:
            raise DomainError(f"p1 + p2 must be positive, got {self.p_s}")
        if not self.q_s > 0:
            raise DomainError(f"q1 + q2 must be positive, got {self.q_s}")

    @property
    def p_s(self) -> float:
        return self.p1 + self.p2

    @property
    def q_s(self) -> float:
        return self.q1 + self.q2

    @property
    def family(self) -> str:
        return self.potential.family

    @property
    def names(self) -> tuple:
        return self.potential.names + BRAND_NAMES

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.potential.as_array(), self.coefficients()])

    def coefficients(self) -> np.ndarray:
        return np.array([self.p1, self.q1, self.p2, self.q2, self.delta], dtype=float)

    @classmethod
    def from_vector(cls, family: str, vector) -> "CompetitionParams":
        pot_cls = POTENTIALS[family]
        n_pot = len(fields(pot_cls))
        vector = [float(v) for v in vector]
        if len(vector) != n_pot + 5:
            raise ValueError(f"{family} expects {n_pot + 5} parameters, got {len(vector)}")
        return cls(pot_cls(*vector[:n_pot]), *vector[n_pot:])

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.to_vector().tolist()))

    def swapped(self) -> "CompetitionParams":
        """Relabel the brands; the trajectories are exchanged, nothing else changes."""
        return CompetitionParams(
            self.potential,
            p1=self.p2,
            q1=self.q2 - self.delta,
            p2=self.p1,
            q2=self.q1 + self.delta,
            delta=self.delta,
        )


#: Published two-brand glimepiride estimates (Amaryl vs Solosa, 188 months).
REFERENCE_PARAMS = CompetitionParams(
    GGSqrt(K=4.8669e7, p_c=2.3837e-3, q_c=4.5235e-2),
    p1=3.2004e-3,
    q1=1.4277e-2,
    p2=-7.9208e-4,
    q2=1.2709e-3,
    delta=-2.2248e-2,
)


# -- curves ------------------------------------------------------------------


def bass_w(t, p, q):
    """Unit-potential Bass curve ``(1 - e^{-(p+q)t}) / (1 + (q/p) e^{-(p+q)t})``."""
    t = _as_time(t)
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    if not p + q > 0:
        raise DomainError(f"p + q must be positive, got {p + q}")
    rate = p + q
    return _out(-np.expm1(-rate * t) / (1.0 + (q / p) * np.exp(-rate * t)))


def bass_cumulative(t, params: BassParams):
    return _out(params.m * np.asarray(bass_w(t, params.p, params.q)))


def market_potential(t, spec: PotentialSpec):
    t = _as_time(t)
    if isinstance(spec, Constant):
        return _out(np.full(t.shape, spec.m))
    if isinstance(spec, GGSqrt):
        return _out(spec.K * np.sqrt(bass_w(t, spec.p_c, spec.q_c)))
    if isinstance(spec, GGNoSqrt):
        return _out(spec.K * np.asarray(bass_w(t, spec.p_c, spec.q_c)))
    if isinstance(spec, GammaCdf):
        vals = kernels.gammainc(spec.alpha1, spec.alpha0 * t.ravel()).reshape(t.shape)
        return _out(spec.K * vals)
    raise DomainError(f"unknown potential specification {spec!r}")


def market_potential_derivative(t, spec: PotentialSpec):
    """Analytic ``m'(t)``.

    The square-root potential has an infinite slope at launch, so it (and a
    Gamma potential with shape below one) is only defined for ``t > 0``.
    """
    t = _as_time(t)
    if isinstance(spec, Constant):
        return _out(np.zeros(t.shape))
    if isinstance(spec, (GGSqrt, GGNoSqrt)):
        p, q = spec.p_c, spec.q_c
        w = np.asarray(bass_w(t, p, q))
        dw = (p + q * w) * (1.0 - w)
        if isinstance(spec, GGNoSqrt):
            return _out(spec.K * dw)
        if np.any(t <= 0):
            raise DomainError("square-root potential derivative requires t > 0")
        return _out(spec.K * dw / (2.0 * np.sqrt(w)))
    if isinstance(spec, GammaCdf):
        a0, a1 = spec.alpha0, spec.alpha1
        if a1 < 1 and np.any(t <= 0):
            raise DomainError("Gamma potential with alpha1 < 1 has no derivative at t = 0")
        with np.errstate(divide="ignore"):
            log_pdf = a1 * math.log(a0) + (a1 - 1.0) * np.log(t) - a0 * t - math.lgamma(a1)
        return _out(spec.K * np.exp(log_pdf))
    raise DomainError(f"unknown potential specification {spec!r}")


def aux_y(t, p_s, q_s):
    """``1 + (q_s/p_s) w(t; p_s, q_s)``: runs from 1 at launch to ``1 + q_s/p_s``."""
    if not p_s > 0:
        raise DomainError(f"p_s must be positive, got {p_s}")
    return _out(1.0 + (q_s / p_s) * np.asarray(bass_w(t, p_s, q_s)))


def power_ratio(y, delta, q_s):
    """``(y**r - 1) / r`` with ``r = delta / q_s``, equal to ``ln y`` at ``r = 0``.

    Evaluated through ``expm1`` so it stays accurate as ``delta`` shrinks.
    """
    y = np.asarray(y, dtype=float)
    if q_s == 0:
        raise DomainError("q_s must be non-zero")
    if np.any(y < 1):
        raise DomainError("power_ratio requires y >= 1")
    log_y = np.log(y)
    r = delta / q_s
    if r == 0:
        return _out(log_y)
    return _out(np.expm1(r * log_y) / r)


def brand_trajectories(t, params: CompetitionParams):
    """Mean cumulative sales ``(z1, z2)`` of the two brands."""
    t = _as_time(t)
    ps, qs = params.p_s, params.q_s
    p1, q1, p2, q2, delta = params.p1, params.q1, params.p2, params.q2, params.delta
    m = np.asarray(market_potential(t, params.potential))
    w = np.asarray(bass_w(t, ps, qs))
    y = 1.0 + (qs / ps) * w

    if abs(delta) <= DELTA_EPS:
        log_y = np.log(y)
        g1 = (q1 / qs) * w + (ps / qs) * (p1 / ps - q1 / qs) * log_y
        g2 = (q2 / qs) * w + (ps / qs) * (p2 / ps - q2 / qs) * log_y
    elif abs(delta - qs) <= DELTA_EPS:
        ylogy = y * np.log(y)
        share = p1 / ps - q1 / qs
        g1 = share * w + (q1 * ps / qs**2) * ylogy
        g2 = (1.0 - share) * w - (q1 * ps / qs**2) * ylogy
    else:
        gap = qs - delta
        ratio = np.asarray(power_ratio(y, delta, qs))
        # (p_s/delta) [y^{delta/q_s} - 1] == (p_s/q_s) * ratio
        g1 = (q1 / gap) * w + (ps / qs) * (p1 / ps - q1 / gap) * ratio
        g2 = ((q2 - delta) / gap) * w + (ps / qs) * (p2 / ps - (q2 - delta) / gap) * ratio
    return _out(m * g1), _out(m * g2)


def instantaneous_rates(t, params: CompetitionParams, z1=None, z2=None, rtol: float = 1e-9):
    """Right-hand side of the two-brand system at ``(t, z1, z2)``.

    ``z1`` and ``z2`` default to the closed-form trajectories.
    """
    t = _as_time(t)
    if np.any(t <= 0):
        raise DomainError("instantaneous rates are evaluated for t > 0 only")
    if z1 is None or z2 is None:
        z1, z2 = brand_trajectories(t, params)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    pot = params.potential
    m = np.asarray(market_potential(t, pot))
    dm = np.asarray(market_potential_derivative(t, pot))
    total = z1 + z2
    if np.any(total > m * (1.0 + rtol)):
        raise DomainError("cumulative sales exceed the market potential")
    residual = 1.0 - total / m
    growth = dm / m
    d1 = (m * params.p1 + (params.q1 + params.delta) * z1 + params.q1 * z2) * residual + z1 * growth
    d2 = (m * params.p2 + (params.q2 - params.delta) * z1 + params.q2 * z2) * residual + z2 * growth
    return _out(d1), _out(d2)


class EffectiveCoefficients(NamedTuple):
    """Per-brand innovation, within-brand and cross-brand word-of-mouth."""

    innovation_1: float
    within_1: float
    cross_1: float
    innovation_2: float
    within_2: float
    cross_2: float


def effective_coefficients(params: CompetitionParams) -> EffectiveCoefficients:
    return EffectiveCoefficients(
        innovation_1=params.p1,
        within_1=params.q1 + params.delta,
        cross_1=params.q1,
        innovation_2=params.p2,
        within_2=params.q2,
        cross_2=params.q2 - params.delta,
    )

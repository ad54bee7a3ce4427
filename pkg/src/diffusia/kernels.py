"""Hot numeric kernels.

Every kernel exists twice: a numba-compiled build and a plain numpy/Python
build made from the same source (or, where numpy can vectorise, a dedicated
array implementation).  ``diffusia._accel`` decides which one the rest of the
package calls; both stay importable so the benchmark and the tests can pit
them against each other.

Potential kinds are encoded as small integers so they can cross into nopython
mode: ``0`` constant ``[m]``, ``1`` square-root Bass ``[K, p_c, q_c]``,
``2`` plain Bass ``[K, p_c, q_c]``, ``3`` Gamma CDF ``[K, alpha0, alpha1]``.
"""
import math

import numpy as np

from . import _accel

CONSTANT, GG_SQRT, GG_NOSQRT, GAMMA_CDF = 0, 1, 2, 3

_GAMMA_EPS = 1e-15
_GAMMA_TINY = 1e-300
_GAMMA_MAXITER = 1000


def _build(jit):
    @jit
    def bass_w(t, p, q):
        decay = math.exp(-(p + q) * t)
        return -math.expm1(-(p + q) * t) / (1.0 + (q / p) * decay)

    @jit
    def bass_w_rate(w, p, q):
        # w' = (p + q w)(1 - w) for the unit-potential Bass curve
        return (p + q * w) * (1.0 - w)

    @jit
    def gammainc_lower(a, x):
        """Regularized lower incomplete gamma P(a, x)."""
        if x <= 0.0:
            return 0.0
        log_prefix = a * math.log(x) - x - math.lgamma(a)
        if x < a + 1.0:
            term = 1.0 / a
            total = term
            ap = a
            for _ in range(_GAMMA_MAXITER):
                ap += 1.0
                term *= x / ap
                total += term
                if abs(term) < abs(total) * _GAMMA_EPS:
                    break
            return total * math.exp(log_prefix)
        # modified Lentz continued fraction for Q(a, x)
        b = x + 1.0 - a
        c = 1.0 / _GAMMA_TINY
        d = 1.0 / b
        h = d
        for i in range(1, _GAMMA_MAXITER):
            an = -i * (i - a)
            b += 2.0
            d = an * d + b
            if abs(d) < _GAMMA_TINY:
                d = _GAMMA_TINY
            c = b + an / c
            if abs(c) < _GAMMA_TINY:
                c = _GAMMA_TINY
            d = 1.0 / d
            delta = d * c
            h *= delta
            if abs(delta - 1.0) < _GAMMA_EPS:
                break
        return 1.0 - math.exp(log_prefix) * h

    @jit
    def potential(kind, pars, t):
        """Return ``(m(t), m'(t) / m(t))``."""
        if kind == CONSTANT:
            return pars[0], 0.0
        if kind == GG_SQRT or kind == GG_NOSQRT:
            w = bass_w(t, pars[1], pars[2])
            rel = bass_w_rate(w, pars[1], pars[2]) / w
            if kind == GG_SQRT:
                return pars[0] * math.sqrt(w), 0.5 * rel
            return pars[0] * w, rel
        k, a0, a1 = pars[0], pars[1], pars[2]
        cdf = gammainc_lower(a1, a0 * t)
        log_pdf = a1 * math.log(a0) + (a1 - 1.0) * math.log(t) - a0 * t - math.lgamma(a1)
        return k * cdf, math.exp(log_pdf) / cdf

    @jit
    def competition_rhs(kind, pars, coef, t, z1, z2):
        m, growth = potential(kind, pars, t)
        residual = 1.0 - (z1 + z2) / m
        p1, q1, p2, q2, delta = coef[0], coef[1], coef[2], coef[3], coef[4]
        d1 = (m * p1 + (q1 + delta) * z1 + q1 * z2) * residual + z1 * growth
        d2 = (m * p2 + (q2 - delta) * z1 + q2 * z2) * residual + z2 * growth
        return d1, d2

    @jit
    def rk4_competition(kind, pars, coef, t0, z10, z20, step, nsteps):
        ts = np.empty(nsteps + 1)
        out1 = np.empty(nsteps + 1)
        out2 = np.empty(nsteps + 1)
        ts[0], out1[0], out2[0] = t0, z10, z20
        z1, z2 = z10, z20
        half = 0.5 * step
        for i in range(nsteps):
            t = t0 + i * step
            a1, a2 = competition_rhs(kind, pars, coef, t, z1, z2)
            b1, b2 = competition_rhs(kind, pars, coef, t + half, z1 + half * a1, z2 + half * a2)
            c1, c2 = competition_rhs(kind, pars, coef, t + half, z1 + half * b1, z2 + half * b2)
            d1, d2 = competition_rhs(kind, pars, coef, t + step, z1 + step * c1, z2 + step * c2)
            z1 += step * (a1 + 2.0 * b1 + 2.0 * c1 + d1) / 6.0
            z2 += step * (a2 + 2.0 * b2 + 2.0 * c2 + d2) / 6.0
            ts[i + 1] = t0 + (i + 1) * step
            out1[i + 1] = z1
            out2[i + 1] = z2
        return ts, out1, out2

    @jit
    def univariate_rhs(kind, pars, ps, qs, t, z):
        m, growth = potential(kind, pars, t)
        return (m * ps + qs * z) * (1.0 - z / m) + z * growth

    @jit
    def rk4_univariate(kind, pars, ps, qs, t0, z0, step, nsteps):
        ts = np.empty(nsteps + 1)
        out = np.empty(nsteps + 1)
        ts[0], out[0] = t0, z0
        z = z0
        half = 0.5 * step
        for i in range(nsteps):
            t = t0 + i * step
            a = univariate_rhs(kind, pars, ps, qs, t, z)
            b = univariate_rhs(kind, pars, ps, qs, t + half, z + half * a)
            c = univariate_rhs(kind, pars, ps, qs, t + half, z + half * b)
            d = univariate_rhs(kind, pars, ps, qs, t + step, z + step * c)
            z += step * (a + 2.0 * b + 2.0 * c + d) / 6.0
            ts[i + 1] = t0 + (i + 1) * step
            out[i + 1] = z
        return ts, out

    @jit
    def arma_residuals(x, ar, ma, start):
        """Conditional innovations of x_t = sum ar_j x_{t-j} + a_t + sum ma_j a_{t-j}.

        ``ar`` and ``ma`` hold lag-1.. coefficients; innovations before
        ``start`` are fixed at zero.
        """
        n = x.shape[0]
        a = np.zeros(n)
        for t in range(start, n):
            acc = x[t]
            for j in range(ar.shape[0]):
                if t - j - 1 >= 0:
                    acc -= ar[j] * x[t - j - 1]
            for j in range(ma.shape[0]):
                if t - j - 1 >= 0:
                    acc -= ma[j] * a[t - j - 1]
            a[t] = acc
        return a

    @jit
    def gammainc_array(a, x):
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            out[i] = gammainc_lower(a, x[i])
        return out

    return {
        "bass_w": bass_w,
        "gammainc_lower": gammainc_lower,
        "gammainc_array": gammainc_array,
        "potential": potential,
        "rk4_competition": rk4_competition,
        "rk4_univariate": rk4_univariate,
        "arma_residuals": arma_residuals,
    }


def _identity(func):
    return func


def gammainc_numpy(a, x):
    """Vectorised numpy build of P(a, x): series below a+1, Lentz fraction above."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0.0
    if not np.any(pos):
        return out
    xs = x[pos]
    log_prefix = a * np.log(xs) - xs - math.lgamma(a)
    res = np.empty_like(xs)

    ser = xs < a + 1.0
    if np.any(ser):
        xv = xs[ser]
        term = np.full_like(xv, 1.0 / a)
        total = term.copy()
        ap = a
        for _ in range(_GAMMA_MAXITER):
            ap += 1.0
            term = term * xv / ap
            total += term
            if np.all(np.abs(term) < np.abs(total) * _GAMMA_EPS):
                break
        res[ser] = total * np.exp(log_prefix[ser])

    cf = ~ser
    if np.any(cf):
        xv = xs[cf]
        b = xv + 1.0 - a
        c = np.full_like(xv, 1.0 / _GAMMA_TINY)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, _GAMMA_MAXITER):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < _GAMMA_TINY, _GAMMA_TINY, d)
            c = b + an / c
            c = np.where(np.abs(c) < _GAMMA_TINY, _GAMMA_TINY, c)
            d = 1.0 / d
            delta = d * c
            h = h * delta
            if np.all(np.abs(delta - 1.0) < _GAMMA_EPS):
                break
        res[cf] = 1.0 - np.exp(log_prefix[cf]) * h

    out[pos] = res
    return out


PY = _build(_identity)
PY["gammainc_array"] = lambda a, x: gammainc_numpy(a, np.asarray(x, dtype=float))

if _accel.numba is not None:
    NB = _build(_accel.njit)
else:  # pragma: no cover
    NB = PY

_ACTIVE = NB if _accel.USE_NUMBA else PY

gammainc_lower = _ACTIVE["gammainc_lower"]
potential = _ACTIVE["potential"]
rk4_competition = _ACTIVE["rk4_competition"]
rk4_univariate = _ACTIVE["rk4_univariate"]
arma_residuals = _ACTIVE["arma_residuals"]


def gammainc(a, x):
    """P(a, x) over an array of ``x`` through the active backend."""
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    return _ACTIVE["gammainc_array"](float(a), x)

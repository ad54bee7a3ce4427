"""Box-constrained Levenberg-Marquardt with a finite-difference Jacobian."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DiffusiaError

LAMBDA_START = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 10.0
LAMBDA_MAX = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    sse: float
    converged: bool
    iterations: int
    message: str
    sse_history: list = field(default_factory=list)


def _safe_eval(fun, x):
    try:
        r = np.asarray(fun(x), dtype=float)
    except (DiffusiaError, FloatingPointError, ZeroDivisionError, OverflowError):
        return None, np.inf
    if not np.all(np.isfinite(r)):
        return None, np.inf
    return r, float(r @ r)


def fd_jacobian(fun: Callable, x: np.ndarray, f0: np.ndarray, rel_step: float = 1e-6,
                scale_floor=1e-2, lower=None, upper=None, central: bool = False) -> np.ndarray:
    """Forward (or central) difference Jacobian.

    Each parameter moves by ``rel_step * max(|x_j|, scale_floor_j)``; the step is
    mirrored when the forward point would cross an upper bound.
    """
    x = np.asarray(x, dtype=float)
    floor = np.broadcast_to(np.asarray(scale_floor, dtype=float), x.shape)
    steps = rel_step * np.maximum(np.abs(x), floor)
    jac = np.empty((f0.size, x.size))
    for j, h in enumerate(steps):
        if upper is not None and x[j] + h > upper[j]:
            h = -h
        use_central = central
        xp = x.copy()
        xp[j] += h
        try:
            fp = np.asarray(fun(xp), dtype=float)
        except DiffusiaError:
            # forward point left the model domain; difference backwards instead
            h = -h
            xp[j] = x[j] + h
            fp = np.asarray(fun(xp), dtype=float)
            use_central = False
        if use_central:
            xm = x.copy()
            xm[j] -= h
            if lower is not None and xm[j] < lower[j]:
                jac[:, j] = (fp - f0) / h
                continue
            fm = np.asarray(fun(xm), dtype=float)
            jac[:, j] = (fp - fm) / (2.0 * h)
        else:
            jac[:, j] = (fp - f0) / h
    return jac


def levenberg_marquardt(fun: Callable, x0, lower=None, upper=None, tol: float = 1e-10,
                        max_iter: int = 500, rel_step: float = 1e-6, scale_floor=1e-2,
                        callback: Optional[Callable] = None) -> LMResult:
    """Minimise ``sum(fun(x)**2)`` inside the box ``[lower, upper]``.

    Damping follows Marquardt's diagonal scaling, so the iteration is
    invariant to rescaling individual parameters.  Trial points outside the
    box are projected back onto it.  Evaluation errors count as rejected steps.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lo, hi)

    r, sse = _safe_eval(fun, x)
    if r is None:
        raise DiffusiaError("objective cannot be evaluated at the starting point")
    history = [sse]
    lam = LAMBDA_START

    def jac_at(xc, rc):
        return fd_jacobian(fun, xc, rc, rel_step, scale_floor, lo, hi)

    J = jac_at(x, r)
    converged = False
    message = "maximum iterations reached"
    it = 0
    while it < max_iter:
        it += 1
        if sse == 0.0:
            converged, message = True, "exact fit"
            break
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = np.finfo(float).eps * max(diag.max(), 1.0)
        # parameters pinned on a bound by the descent direction stay frozen
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        if not np.any(free):
            converged, message = True, "all parameters held at bounds"
            break
        Af, gf, df = A[np.ix_(free, free)], g[free], diag[free]
        accepted = False
        while lam <= LAMBDA_MAX:
            dx = np.zeros(n)
            try:
                dx[free] = np.linalg.solve(Af + lam * np.diag(df), -gf)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_UP
                continue
            x_new = np.clip(x + dx, lo, hi)
            if np.array_equal(x_new, x):
                break
            r_new, sse_new = _safe_eval(fun, x_new)
            if sse_new < sse:
                accepted = True
                break
            lam *= LAMBDA_UP
        if not accepted:
            converged, message = True, "no further descent at working precision"
            break
        rel_change = (sse - sse_new) / sse
        x, r, sse = x_new, r_new, sse_new
        history.append(sse)
        lam = max(lam / LAMBDA_DOWN, 1e-12)
        if callback is not None:
            callback(it, x, sse)
        J = jac_at(x, r)
        if rel_change < tol:
            converged, message = True, "relative SSE change below tolerance"
            break

    return LMResult(x=x, residuals=r, jacobian=J, sse=sse, converged=converged,
                    iterations=it, message=message, sse_history=history)

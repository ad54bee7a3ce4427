"""Backend selection for the hot kernels.

Set ``DIFFUSIA_DISABLE_NUMBA=1`` to run every kernel through its pure
numpy/Python path.  Numba is also skipped silently when it is not importable.
"""
import os

_FLAG = os.environ.get("DIFFUSIA_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode, or return a no-op when numba is off."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)


def select(compiled, fallback):
    return compiled if USE_NUMBA else fallback


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

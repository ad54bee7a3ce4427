"""Time the compiled kernels against their pure-Python fallbacks.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Compilation is
triggered once before timing, so the numbers are steady-state.
"""
import argparse
import timeit

import numpy as np

from diffusia import core, kernels


def cases():
    ref = core.REFERENCE_PARAMS
    pot = ref.potential
    z1, z2 = core.brand_trajectories(0.5, ref)
    rk4 = (pot.kind, pot.as_array(), ref.coefficients(), 0.5, float(z1), float(z2), 0.01, 18750)
    x = np.ascontiguousarray(np.linspace(0.0, 60.0, 2000))
    resid = np.random.default_rng(0).standard_normal(2000)
    arma = (resid, np.array([0.5] + [0.0] * 10 + [0.4, -0.2]), np.array([0.3]), 13)
    return {
        "rk4_competition (18750 steps)": ("rk4_competition", rk4),
        "gammainc_array (2000 points)": ("gammainc_array", (2.5, x)),
        "arma_residuals (2000 points)": ("arma_residuals", arma),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    print(f"{'kernel':34s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>9s}")
    for label, (name, call_args) in cases().items():
        fast, slow = kernels.NB[name], kernels.PY[name]
        fast(*call_args)
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{label:34s} {1e3 * t_fast:12.3f} {1e3 * t_slow:12.3f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()

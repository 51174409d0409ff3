"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from safab import _kernels_py
from safab.gauss import GaussianModel
from safab.marginal import Mechanism, SelectionSpec, selected_marginal
from safab.prior import TwoGroupsPrior, default_theta_grid, trapezoid_weights
from safab.spending import build_spending_function

try:
    from safab import _kernels as _compiled
except ImportError:
    _compiled = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def pr_case(n=2000, sweeps=10):
    rng = np.random.default_rng(0)
    theta = default_theta_grid()
    ys = np.where(rng.random(n) < 0.2, rng.normal(0, np.sqrt(3), n), 0.0) + rng.standard_normal(n)
    order = np.concatenate([rng.permutation(n) for _ in range(sweeps)]).astype(np.intp)
    gammas = (np.arange(1, order.size + 1) + 1.0) ** -0.67
    mass0 = 0.5 * trapezoid_weights(theta) / trapezoid_weights(theta).sum()
    ones = np.ones(theta.size)

    def run(mod):
        return lambda: mod.pr_sweeps(theta, mass0.copy(), 0.5, ys, order, gammas, 1.0, ones, 1.0)
    return f"PR: {sweeps} sweeps x {n} obs x {theta.size} nodes", run


def inversion_case(n=20000):
    model, spec = GaussianModel(1.0), SelectionSpec(2.0, Mechanism.JOINT)
    grid = default_theta_grid(14.0)
    spend = build_spending_function(selected_marginal(TwoGroupsPrior(0.2, 3.0), model, spec),
                                    model, spec, 0.1, grid)
    rng = np.random.default_rng(1)
    ys = (2.0 + rng.exponential(1.5, n)) * rng.choice([-1.0, 1.0], n)
    w = spend(grid)
    lo, hi = _kernels_py.acceptance_bounds(grid, w, 1.0, 2.0, 0.1)

    def run(mod):
        return lambda: mod.invert_on_grid(grid, w, lo, hi, ys, 1.0, 2.0, 0.1, 1e-5)
    return f"inversion: {n} observations on {grid.size} nodes", run


def bounds_case(n=200000):
    theta = np.linspace(-15.0, 15.0, n)
    w = 0.5 + 0.4 * np.tanh(theta)

    def run(mod):
        return lambda: mod.acceptance_bounds(theta, w, 1.0, 2.0, 0.1)
    return f"acceptance bounds: {n} (theta, w) pairs", run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'case':<48} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for label, run in (pr_case(), inversion_case(), bounds_case()):
        tp = _best(run(_kernels_py), args.repeat)
        if _compiled is None:
            print(f"{label:<48} {tp:>11.3f} {'n/a':>11} {'':>8}")
            continue
        tc = _best(run(_compiled), args.repeat)
        print(f"{label:<48} {tp:>11.3f} {tc:>11.3f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()

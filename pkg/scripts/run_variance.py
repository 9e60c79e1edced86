"""Bias and spread of the variance MLE from a piecewise-linear convex fit.

    python scripts/run_variance.py --n 5000 --sigma 0.5 --reps 500
"""

import argparse
import math

import numpy as np

from cvxspline.estimators import fit_spline, sigma_mle
from cvxspline.simulation import gen_data, get_function, mean_se


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--function", default="f3")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    f, n, s = get_function(args.function), args.n, args.sigma
    K = math.ceil(n ** (1 / 3))
    vals = np.empty(args.reps)
    for rep in range(args.reps):
        x, y = gen_data(f, n, s, (args.seed, n, rep))
        vals[rep] = sigma_mle(y, fit_spline(x, y, 1, K), x)
    mean, se = mean_se(vals)
    v = np.var(math.sqrt(n) * (vals - s**2), ddof=1)
    print(f"K_n={K}: mean {mean:.5f} +- {se:.5f} (true {s**2:.5f}), "
          f"var of sqrt(n)(s2_hat - s2) {v:.4f} (2 sigma^4 = {2 * s**4:.4f})")


if __name__ == "__main__":
    main()

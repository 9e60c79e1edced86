"""Risk of the two adaptive estimators relative to oracle fixed-r fits.

    python scripts/run_adaptive.py --n 4096 --reps 200
"""

import argparse

from cvxspline.simulation import EstimatorSpec, get_function, mc_risk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--functions", default="f1,f2,f3")
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--x0", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--known-sigma", action="store_true", help="skip the pilot variance estimate")
    args = ap.parse_args()

    est_sigma = not args.known_sigma
    print(f"{'f':4s} {'sup adaptive':>14s} {'sup oracle':>12s} {'ratio':>6s}   "
          f"{'MSE adaptive':>13s} {'MSE oracle':>11s} {'ratio':>6s}")
    for fid in args.functions.split(","):
        f = get_function(fid)
        common = dict(seed=args.seed, workers=args.workers)
        sa = mc_risk(EstimatorSpec(kind="adapt_sup", estimate_sigma=est_sigma), f, [args.n], args.sigma,
                     args.reps, "sup", **common)
        so = mc_risk(EstimatorSpec(kind="fixed_r", mode="sup"), f, [args.n], args.sigma, args.reps, "sup",
                     **common)
        pa = mc_risk(EstimatorSpec(kind="adapt_point", estimate_sigma=est_sigma), f, [args.n], args.sigma,
                     args.reps, "pointwise", x0=args.x0, **common)
        po = mc_risk(EstimatorSpec(kind="fixed_r", mode="point"), f, [args.n], args.sigma, args.reps,
                     "pointwise", x0=args.x0, **common)
        print(f"{fid:4s} {sa.risk[0]:14.5f} {so.risk[0]:12.5f} {sa.risk[0] / so.risk[0]:6.3f}   "
              f"{pa.risk[0]:13.3e} {po.risk[0]:11.3e} {pa.risk[0] / po.risk[0]:6.3f}")


if __name__ == "__main__":
    main()

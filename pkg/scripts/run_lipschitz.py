"""Sweep ||F^T (F Lambda F^T)^-1 F||_inf over sampled active sets and knot counts.

    python scripts/run_lipschitz.py --p 1 --kn 8,16,32,64,128 --alphas 200
"""

import argparse

from cvxspline.lipschitz import empirical_lipschitz, inf_norm_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=1)
    ap.add_argument("--kn", default="8,16,32,64,128")
    ap.add_argument("--alphas", type=int, default=200)
    ap.add_argument("--pairs", type=int, default=30, help="solve pairs for the empirical constant")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = [int(k) for k in args.kn.split(",")]
    rep = inf_norm_sweep(args.p, grid, args.alphas, args.seed)
    print(f"{'K_n':>5s} {'m':>5s} {'alphas':>7s} {'sampling':>10s} {'max|G|inf':>10s} {'empirical':>10s}")
    for rec in rep.records:
        c = empirical_lipschitz(args.p, rec["K_n"], args.pairs, args.seed)
        print(f"{rec['K_n']:5d} {rec['m']:5d} {rec['alphas']:7d} {rec['sampling']:>10s} "
              f"{rec['max_inf_norm_G']:10.4f} {c:10.4f}")
    print(f"eigenvalues in [{rep.eig_min:.4f}, {rep.eig_max:.4f}], structural violations "
          f"{rep.structure_violations + rep.rowsum_violations + rep.eig_violations}, "
          f"growth ratio {rep.growth_ratio:.4f}")


if __name__ == "__main__":
    main()

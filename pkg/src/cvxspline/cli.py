"""Command-line front end.

Exit codes: 0 success, 2 malformed input or configuration, 3 solver did not
certify optimality, 4 query point too close to the boundary, 5 verification
failed (the report is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from . import lipschitz, simulation
from .cone_qp import SolverError, second_diff
from .splines import make_basis

log = logging.getLogger("cvxspline")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_BOUNDARY, EXIT_VERIFY = 0, 2, 3, 4, 5


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# I/O helpers


def read_xy(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``x,y`` CSV; raises ``InputError`` naming the offending row."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["x", "y"]:
            raise InputError(f"{path}: header must be 'x,y', got {header!r}")
        xs, ys = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputError(f"{path}: row {row_no}: expected 2 columns, got {len(row)}")
            try:
                xv, yv = float(row[0]), float(row[1])
            except ValueError:
                raise InputError(f"{path}: row {row_no}: non-numeric cell in {row!r}") from None
            if not (math.isfinite(xv) and math.isfinite(yv)):
                raise InputError(f"{path}: row {row_no}: non-finite value")
            xs.append(xv)
            ys.append(yv)
    x, y = np.array(xs), np.array(ys)
    if x.size < 16:
        raise InputError(f"{path}: need at least 16 rows, got {x.size}")
    if x[0] <= 0 or x[-1] > 1:
        raise InputError(f"{path}: x must lie in (0, 1]")
    bad = np.flatnonzero(np.diff(x) <= 0)
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 3}: x is not strictly increasing")
    return x, y


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_jsonl(path: Path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_fit(out: Path, fit: est.FittedSpline, grid_size: int):
    out.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(0.0, 1.0, grid_size)
    write_csv(out / "fitted.csv", ["x", "fhat"], zip(grid, fit(grid)))
    write_csv(out / "coefficients.csv", ["k", "coef"], enumerate(fit.coeffs))


def load_fit(out) -> est.FittedSpline:
    """Rebuild a fitted spline from a ``fit``/``adapt-sup`` output directory."""
    out = Path(out)
    summary = json.loads((out / "summary.json").read_text())
    with open(out / "coefficients.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    coeffs = np.array([float(r["coef"]) for r in rows])
    basis = make_basis(summary["p"], summary["k_n"])
    return est.FittedSpline(basis, coeffs, tuple(summary.get("provenance", ("loaded", None))))


def fit_summary(fit: est.FittedSpline, n: int) -> dict:
    sol = fit.solution
    return {
        "n": n,
        "k_n": fit.num_intervals,
        "p": fit.degree,
        "provenance": list(fit.provenance),
        "min_second_difference": float(second_diff(fit.coeffs).min()),
        "certificate": sol.kkt.as_dict() if sol is not None else None,
        "iterations": sol.iterations if sol is not None else None,
        "active_set": list(sol.alpha) if sol is not None else None,
    }


def _float_list(s) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).split(",") if v.strip()]


def _int_list(s) -> list[int]:
    return [int(v) for v in _float_list(s)]


def _sigma_arg(s):
    if s is None or str(s).lower() == "auto":
        return None
    v = float(s)
    if v <= 0:
        raise InputError("--sigma must be positive or 'auto'")
    return v


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    x, y = read_xy(args.input)
    n = y.size
    sigma = _sigma_arg(args.sigma)
    summary = {"command": "fit", "r": args.r, "l": args.L, "mode": args.mode}
    if sigma is None:
        pilot = est.pilot_fit(x, y)
        sigma = math.sqrt(est.sigma_mle(y, pilot, x))
        summary.update(sigma_source="auto", pilot_k_n=pilot.num_intervals)
    else:
        summary["sigma_source"] = "given"
    summary["sigma"] = sigma
    p = est.degree_for(args.r)
    K = args.K if args.K else est.optimal_Kn(args.r, args.L, sigma, n, args.mode)
    try:
        fit = est.fit_spline(x, y, p, K, args.tol, ("fixed_r", args.r), sigma)
    except SolverError as exc:
        return _solver_failure(args, summary, exc)
    summary.update(fit_summary(fit, n))
    summary["sigma2_hat"] = est.sigma_mle(y, fit, x)
    out = Path(args.out)
    write_fit(out, fit, args.grid_size)
    write_json(out / "summary.json", summary)
    print(f"fit: n={n} K_n={K} p={p} certified={fit.solution.kkt.passed} -> {out}")
    return EXIT_OK


def _solver_failure(args, summary, exc):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sol = exc.solution
    summary.update(certified=False, error=str(exc),
                   certificate=sol.kkt.as_dict() if sol is not None else None)
    write_json(out / "summary.json", summary)
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_SOLVER


def _adaptive_config(args) -> est.AdaptiveConfig:
    return est.AdaptiveConfig(L=args.L, sigma=_sigma_arg(args.sigma), C1=args.C1, C2=args.C2,
                              lam=args.lam, seed=args.seed)


def cmd_adapt_sup(args) -> int:
    x, y = read_xy(args.input)
    summary = {"command": "adapt-sup", "l": args.L}
    try:
        fit = est.adapt_sup(x, y, _adaptive_config(args))
    except SolverError as exc:
        return _solver_failure(args, summary, exc)
    summary.update(fit_summary(fit, y.size))
    summary.update(sigma=fit.sigma_used, r_hat=fit.trace["r_hat"],
                   sigma2_hat=est.sigma_mle(y, fit, x))
    out = Path(args.out)
    write_fit(out, fit, args.grid_size)
    write_json(out / "summary.json", summary)
    write_json(out / "trace.json", fit.trace)
    print(f"adapt-sup: r_hat={fit.trace['r_hat']:.4g} K_n={fit.num_intervals} -> {out}")
    return EXIT_OK


def cmd_adapt_point(args) -> int:
    x, y = read_xy(args.input)
    if args.x0 is None or not 0 < args.x0 < 1:
        raise InputError("--x0 must be given and lie in (0, 1)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        value, trace = est.adapt_point(x, y, args.x0, _adaptive_config(args))
    except est.BoundaryError as exc:
        write_json(out / "summary.json", {"command": "adapt-point", "x0": args.x0, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUNDARY
    except SolverError as exc:
        return _solver_failure(args, {"command": "adapt-point", "x0": args.x0}, exc)
    summary = {"command": "adapt-point", "x0": args.x0, "estimate": value, "trace": trace.as_dict()}
    write_json(out / "summary.json", summary)
    print(f"adapt-point: f({args.x0:g}) ~ {value:.6g} (j={trace.j_selected}, K={trace.K[trace.j_selected]})")
    return EXIT_OK


def cmd_sigma(args) -> int:
    x, y = read_xy(args.input)
    n = y.size
    K = args.K if args.K else max(3, math.ceil(n ** (1 / 3) - 1e-9))
    try:
        fit = est.fit_spline(x, y, args.p, K, args.tol, ("pilot", None))
    except SolverError as exc:
        return _solver_failure(args, {"command": "sigma"}, exc)
    s2 = est.sigma_mle(y, fit, x)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"command": "sigma", "n": n, "k_n": K, "p": args.p, "sigma2_hat": s2, "sigma_hat": math.sqrt(s2)}
    write_json(out / "summary.json", summary)
    print(f"sigma: sigma2_hat={s2:.6g} (K_n={K}, p={args.p})")
    return EXIT_OK


def cmd_verify_lipschitz(args) -> int:
    rep = lipschitz.inf_norm_sweep(args.p, _int_list(args.kn_grid), args.alphas, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    final = {
        "summary": True, "p": rep.p, "kn_grid": rep.kn_grid, "max_inf_norm_G": rep.max_inf_norm_G,
        "growth_ratio": rep.growth_ratio, "growth_flag": rep.growth_flag,
        "eig_min": rep.eig_min, "eig_max": rep.eig_max,
        "structure_violations": rep.structure_violations,
        "rowsum_violations": rep.rowsum_violations, "eig_violations": rep.eig_violations,
        "passed": rep.passed,
    }
    write_jsonl(out, rep.records + [final])
    print(f"verify-lipschitz: max ||G||_inf {['%.4g' % v for v in rep.max_inf_norm_G]} "
          f"violations={rep.structure_violations} passed={rep.passed} -> {out}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def default_slope_window(spec, f, metric):
    """``-r/(2r+1) +- 0.08`` for a fixed-r sup-norm study, else no window."""
    if spec.kind != "fixed_r" or metric != "sup":
        return None
    r = spec.r if spec.r is not None else f.r
    target = -r / (2 * r + 1)
    return [target - 0.08, target + 0.08]


def cmd_mc_rates(args) -> int:
    if args.reps < 100:
        raise InputError(f"--reps must be at least 100 (got {args.reps})")
    f = simulation.get_function(args.function)
    spec = simulation.EstimatorSpec(
        kind=args.estimator, r=args.r, mode=args.mode, L=args.L, lam=args.lam,
        estimate_sigma=args.estimate_sigma, C1=args.C1, C2=args.C2)
    n_grid = _int_list(args.n_grid)
    report = simulation.mc_risk(spec, f, n_grid, args.sigma, args.reps, args.metric, args.seed,
                                args.x0, args.workers)
    window = args.slope_window
    if window is None:
        window = default_slope_window(spec, f, args.metric)
    ok = True
    if len(n_grid) >= 4:
        slope, se = simulation.rate_slope(report, args.abscissa)
        if window is not None:
            lo, hi = _float_list(window)
            ok = lo <= slope <= hi
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = {"summary": True, "estimator": report.estimator, "function": report.function,
               "metric": report.metric, "slope": report.slope, "slope_se": report.slope_se,
               "abscissa": report.abscissa, "slope_window": window, "passed": ok}
    write_jsonl(out, report.records() + [summary])
    write_csv(out.with_suffix(".csv"), ["n", "risk", "se", "failures"],
              zip(report.n_grid, report.risk, report.se, report.failures))
    slope_txt = f"{report.slope:.4f} ± {report.slope_se:.4f}" if report.slope is not None else "n/a"
    print(f"mc-rates: {report.estimator} on {report.function} ({report.metric}) slope={slope_txt} -> {out}")
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser


def _common(p, out_default):
    p.add_argument("--config", help="JSON file with defaults keyed by flag name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=out_default)
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p):
    p.add_argument("--input", required=False, help="CSV with header x,y")
    p.add_argument("--grid-size", type=int, default=1001, help="points in the output evaluation grid")
    p.add_argument("--tol", type=float, default=1e-9)


def _adaptive_args(p):
    p.add_argument("--L", type=float, default=1.0, help="Hölder constant")
    p.add_argument("--sigma", default="auto", help="noise sd or 'auto'")
    p.add_argument("--C1", type=float, default=None)
    p.add_argument("--C2", type=float, default=None)
    p.add_argument("--lam", type=float, default=0.7)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="cvxspline", description="Convex B-spline regression")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("fit", help="fixed-r convex spline fit")
    _common(p, "fit_out")
    _data_args(p)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--sigma", default="auto")
    p.add_argument("--mode", choices=est.MODES, default="sup")
    p.add_argument("--K", type=int, default=None, help="override the number of knot intervals")
    p.set_defaults(func=cmd_fit)
    subs["fit"] = p

    p = sub.add_parser("adapt-sup", help="Lepski sup-norm adaptive fit")
    _common(p, "adapt_sup_out")
    _data_args(p)
    _adaptive_args(p)
    p.set_defaults(func=cmd_adapt_sup)
    subs["adapt-sup"] = p

    p = sub.add_parser("adapt-point", help="pointwise adaptive estimate at x0")
    _common(p, "adapt_point_out")
    _data_args(p)
    _adaptive_args(p)
    p.add_argument("--x0", type=float, default=None)
    p.set_defaults(func=cmd_adapt_point)
    subs["adapt-point"] = p

    p = sub.add_parser("sigma", help="variance MLE from a convex fit")
    _common(p, "sigma_out")
    _data_args(p)
    p.add_argument("--K", type=int, default=None, help="default ceil(n^(1/3))")
    p.add_argument("--p", type=int, default=1)
    p.set_defaults(func=cmd_sigma)
    subs["sigma"] = p

    p = sub.add_parser("verify-lipschitz", help="selection-matrix checks and ||G||_inf sweep")
    _common(p, "lipschitz.jsonl")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--kn-grid", default="8,16,32,64,128")
    p.add_argument("--alphas", type=int, default=200, help="sampled active sets per K_n")
    p.set_defaults(func=cmd_verify_lipschitz)
    subs["verify-lipschitz"] = p

    p = sub.add_parser("mc-rates", help="Monte Carlo risk and rate slope")
    _common(p, "mc_rates.jsonl")
    p.add_argument("--function", default="f3")
    p.add_argument("--estimator", default="fixed_r",
                   choices=["fixed_r", "adapt_sup", "adapt_point", "unconstrained", "pilot"])
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--mode", choices=est.MODES, default="sup")
    p.add_argument("--metric", choices=simulation.METRICS, default="sup")
    p.add_argument("--n-grid", default="512,1024,2048,4096,8192,16384")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--lam", type=float, default=0.7)
    p.add_argument("--C1", type=float, default=None)
    p.add_argument("--C2", type=float, default=None)
    p.add_argument("--estimate-sigma", action="store_true")
    p.add_argument("--x0", type=float, default=0.5)
    p.add_argument("--abscissa", choices=["n", "n_over_logn"], default="n_over_logn")
    p.add_argument("--slope-window", default=None,
                   help="lo,hi acceptance window for the slope (write --slope-window=-0.5,-0.3)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_mc_rates)
    subs["mc-rates"] = p
    return parser, subs


def _apply_config(parser, subs, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    sp = subs[args.command]
    known = {a.dest for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise InputError(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = _apply_config(parser, subs, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "input", "unused") is None:
            raise InputError("--input is required")
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

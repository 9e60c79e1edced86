"""Test functions, seeded data generation and Monte Carlo risk / rate estimation.

Random streams: every replication draws from ``numpy.random.Generator`` over
the counter-based ``Philox`` bit generator, seeded with the entropy tuple
``(seed, n, replication)``. Normals use numpy's ziggurat sampler
(``Generator.standard_normal``). Streams are independent of execution order,
so serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import estimators as est

SUP_GRID = np.linspace(0.0, 1.0, 2000)


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    id: str
    r: float
    L: float
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    convex: bool = True
    description: str = ""

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


def _abs_half(x):
    return np.abs(x - 0.5)


def _abs_half_32(x):
    return np.abs(x - 0.5) ** 1.5


def _square(x):
    return x**2


def _square_tilt(x):
    return x**2 + 0.1 * x


_CATALOG = (
    TestFunction("f1", 1.0, 1.0, _abs_half, description="|x - 1/2|"),
    # f' = 1.5 sgn(x - 1/2) |x - 1/2|^(1/2); worst Hölder-1/2 ratio is across the kink
    TestFunction("f2", 1.5, 1.5 * math.sqrt(2.0), _abs_half_32, description="|x - 1/2|^(3/2)"),
    TestFunction("f3", 2.0, 2.0, _square, description="x^2"),
    TestFunction("f4", 3.0, 2.0, _square_tilt, description="x^2 + 0.1 x (f'' = 2)"),
    TestFunction("f5", 2.0, math.e, np.exp, description="exp(x)"),
)


def catalog() -> list[TestFunction]:
    return list(_CATALOG)


def get_function(fid: str) -> TestFunction:
    for f in _CATALOG:
        if f.id == fid:
            return f
    raise KeyError(f"unknown test function {fid!r}; known: {[f.id for f in _CATALOG]}")


def make_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def gen_data(f: TestFunction, n: int, sigma: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """``x_i = i/n`` and ``y_i = f(x_i) + sigma z_i``; ``seed`` is an int or a tuple of ints."""
    if n < 16:
        raise ValueError("need n >= 16")
    key = seed if isinstance(seed, tuple) else (seed,)
    x = np.arange(1, n + 1) / n
    z = make_rng(*key).standard_normal(n)
    return x, f(x) + sigma * z


@dataclass(frozen=True)
class EstimatorSpec:
    """What to fit in each replication.

    ``kind`` is one of ``fixed_r``, ``adapt_sup``, ``adapt_point``,
    ``unconstrained`` or ``pilot``. ``L``/``sigma`` default to the test
    function's constant and the true noise level.
    """

    kind: str = "fixed_r"
    r: float | None = None
    mode: str = "sup"
    L: float | None = None
    sigma: float | None = None
    estimate_sigma: bool = False
    K: int | None = None
    p: int | None = None
    lam: float = 0.7
    C1: float | None = None
    C2: float | None = None

    @property
    def id(self) -> str:
        parts = [self.kind]
        if self.r is not None:
            parts.append(f"r={self.r:g}")
        if self.kind == "fixed_r":
            parts.append(self.mode)
        return ":".join(parts)

    def _config(self, f, sigma):
        return est.AdaptiveConfig(
            L=self.L or f.L, sigma=None if self.estimate_sigma else (self.sigma or sigma),
            C1=self.C1, C2=self.C2, lam=self.lam)

    def predict(self, f: TestFunction, x, y, sigma: float, points) -> np.ndarray:
        """Estimated regression function at ``points``."""
        if self.kind == "adapt_point":
            cfg = self._config(f, sigma)
            return np.array([est.adapt_point(x, y, float(t), cfg)[0] for t in np.atleast_1d(points)])
        return self.fit(f, x, y, sigma)(points)

    def fit(self, f: TestFunction, x, y, sigma: float) -> est.FittedSpline:
        L = self.L or f.L
        s = self.sigma or sigma
        if self.kind == "fixed_r":
            r = self.r if self.r is not None else f.r
            return est.fit_fixed_r(x, y, r, L, s, self.mode)
        if self.kind == "adapt_sup":
            return est.adapt_sup(x, y, self._config(f, sigma))
        if self.kind == "unconstrained":
            r = self.r if self.r is not None else f.r
            p = self.p if self.p is not None else est.degree_for(r)
            K = self.K or est.optimal_Kn(min(r, 4), L, s, y.size, self.mode)
            return est.fit_unconstrained(x, y, K, p)
        if self.kind == "pilot":
            return est.pilot_fit(x, y)
        raise ValueError(f"unknown estimator kind {self.kind!r}")


@dataclass
class RiskReport:
    estimator: str
    function: str
    metric: str
    sigma: float
    replications: int
    n_grid: list[int]
    risk: list[float]
    se: list[float]
    failures: list[int]
    x0: float | None = None
    slope: float | None = None
    slope_se: float | None = None
    abscissa: str | None = None

    def records(self) -> list[dict]:
        base = {k: v for k, v in asdict(self).items() if k not in ("n_grid", "risk", "se", "failures")}
        return [dict(base, n=n, risk=r, se=s, failures=fl)
                for n, r, s, fl in zip(self.n_grid, self.risk, self.se, self.failures)]


METRICS = ("sup", "pointwise", "l2")


def _loss(spec, f, n, sigma, metric, x0, seed, rep):
    x, y = gen_data(f, n, sigma, (seed, n, rep))
    if metric == "pointwise":
        pts = np.array([x0])
        return float((spec.predict(f, x, y, sigma, pts)[0] - f(x0)) ** 2)
    pred = spec.predict(f, x, y, sigma, SUP_GRID)
    err = pred - f(SUP_GRID)
    return float(np.max(np.abs(err)) if metric == "sup" else np.mean(err**2))


def _safe_loss(args):
    try:
        return _loss(*args)
    except (ArithmeticError, RuntimeError, ValueError):
        return float("nan")


def pairwise_sum(a: np.ndarray) -> float:
    """Fixed-order pairwise summation (deterministic regardless of worker count)."""
    a = np.asarray(a, dtype=float)
    if a.size <= 8:
        s = 0.0
        for v in a:
            s += v
        return s
    h = a.size // 2
    return pairwise_sum(a[:h]) + pairwise_sum(a[h:])


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    k = v.size
    mean = pairwise_sum(v) / k
    var = pairwise_sum((v - mean) ** 2) / (k - 1) if k > 1 else 0.0
    return mean, math.sqrt(var / k)


def replicate_losses(spec: EstimatorSpec, f: TestFunction, n: int, sigma: float, reps: int,
                     metric: str = "sup", seed: int = 0, x0: float = 0.5, workers: int = 1) -> np.ndarray:
    jobs = [(spec, f, n, sigma, metric, x0, seed, rep) for rep in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return np.array(list(pool.map(_safe_loss, jobs, chunksize=max(1, reps // (4 * workers)))))
    return np.array([_safe_loss(j) for j in jobs])


def mc_risk(spec: EstimatorSpec, f: TestFunction, n_grid, sigma: float, reps: int,
            metric: str = "sup", seed: int = 0, x0: float = 0.5, workers: int = 1,
            min_reps: int = 100) -> RiskReport:
    """Monte Carlo risk per sample size.

    ``sup`` is the max error over a fixed 2000-point grid, ``pointwise`` the
    squared error at ``x0``, ``l2`` the mean squared error over the grid.
    """
    if reps < min_reps:
        raise ValueError(f"need at least {min_reps} replications, got {reps}")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    risk, se, fails = [], [], []
    for n in n_grid:
        losses = replicate_losses(spec, f, int(n), sigma, reps, metric, seed, x0, workers)
        ok = losses[np.isfinite(losses)]
        fails.append(int(losses.size - ok.size))
        m, s = mean_se(ok) if ok.size else (float("nan"), float("nan"))
        risk.append(m)
        se.append(s)
    return RiskReport(spec.id, f.id, metric, sigma, reps, [int(n) for n in n_grid], risk, se, fails,
                      x0 if metric == "pointwise" else None)


def rate_slope(report: RiskReport, abscissa: str = "n") -> tuple[float, float]:
    """OLS slope (and its standard error) of log risk against log n or log(n / log n)."""
    n = np.asarray(report.n_grid, dtype=float)
    if n.size < 4:
        raise ValueError("need at least 4 grid points")
    if abscissa == "n":
        t = np.log(n)
    elif abscissa == "n_over_logn":
        t = np.log(n / np.log(n))
    else:
        raise ValueError("abscissa must be 'n' or 'n_over_logn'")
    if np.ptp(t) == 0:
        raise ValueError("degenerate abscissa")
    u = np.log(np.asarray(report.risk, dtype=float))
    tc = t - t.mean()
    slope = float(tc @ (u - u.mean()) / (tc @ tc))
    resid = u - u.mean() - slope * tc
    dof = t.size - 2
    se = float(math.sqrt(max(resid @ resid, 0.0) / dof / (tc @ tc)))
    report.slope, report.slope_se, report.abscissa = slope, se, abscissa
    return slope, se

"""Convex spline estimators: fixed smoothness, sup-norm and pointwise adaptive, variance MLE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import splines
from .cone_qp import ConeProblem, ConeSolution, solve
from .splines import SplineBasis, make_basis

LEPSKI_FACTOR = (1 + math.sqrt(2)) / 2
MODES = ("sup", "point")


class BoundaryError(ValueError):
    """The query point is too close to 0 or 1 for the pointwise indicator window."""


@dataclass
class FittedSpline:
    basis: SplineBasis
    coeffs: np.ndarray = field(repr=False)
    provenance: tuple[str, Any]
    sigma_used: float | None = None
    solution: ConeSolution | None = field(default=None, repr=False)
    trace: dict | None = field(default=None, repr=False)

    @property
    def degree(self) -> int:
        return self.basis.degree

    @property
    def num_intervals(self) -> int:
        return self.basis.num_intervals

    def __call__(self, x):
        return splines.evaluate(self.basis, self.coeffs, x)


@dataclass
class AdaptiveConfig:
    """Settings shared by the adaptive procedures.

    ``sigma=None`` means "estimate from a pilot fit". ``C1``/``C2`` are the
    bias and stochastic constants in the rate ``psi``; ``None`` selects the
    default calibration in :func:`default_constants`.
    """

    L: float = 1.0
    sigma: float | None = None
    C1: float | None = None
    C2: float | None = None
    lam: float = 0.7
    sup_grid_cap: int | None = None
    dyadic_j_cap: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("Hölder constant L must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive (or None to estimate it)")
        # P(Z > 0.6745) = 1/4
        if self.lam < 0.675:
            raise ValueError("lambda must satisfy P(Z > lambda) < 1/4, i.e. lambda >= 0.675")


@dataclass
class PointwiseTrace:
    x0: float
    j_selected: int
    indicators: list[int]
    statistics: list[float | None]
    thresholds: list[float]
    estimates: list[float | None]
    K: list[int]
    d_n: list[int | None]
    sigma: float
    capped: bool = False

    def as_dict(self) -> dict:
        return {
            "x0": self.x0, "j_selected": self.j_selected, "indicators": self.indicators,
            "statistics": self.statistics, "thresholds": self.thresholds,
            "estimates": self.estimates, "K": self.K, "d_n": self.d_n,
            "sigma": self.sigma, "capped": self.capped,
        }


# ---------------------------------------------------------------------------
# fixed-r fits


def degree_for(r: float) -> int:
    """Spline degree ``ceil(r - 1)``, at least 1."""
    return max(1, math.ceil(r - 1 - 1e-12))


def optimal_Kn_real(r: float, L: float, sigma: float, n: int, mode: str = "sup") -> float:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    base = n / math.log(n) if mode == "sup" else float(n)
    return (L / sigma) ** (2 / (2 * r + 1)) * base ** (1 / (2 * r + 1))


def optimal_Kn(r: float, L: float, sigma: float, n: int, mode: str = "sup") -> int:
    if not 1 <= r <= 4:
        raise ValueError("r must lie in [1, 4]")
    if L <= 0 or sigma <= 0:
        raise ValueError("L and sigma must be positive")
    if n < 16:
        raise ValueError("need n >= 16")
    return int(min(max(round(optimal_Kn_real(r, L, sigma, n, mode)), 3), n))


def _design(x, basis: SplineBasis, n: int):
    if x is None:
        return splines.uniform_design(basis, n)
    x = np.asarray(x, dtype=float)
    if x.size == n and np.allclose(x, splines.design_points(n), rtol=0, atol=1e-12):
        return splines.uniform_design(basis, n)
    return splines.design_from_points(basis, x)


def fit_spline(x, y, p: int, K: int, tol: float = 1e-9, provenance=("fixed_K", None),
               sigma_used=None) -> FittedSpline:
    """Convex spline fit with degree ``p`` and ``K`` intervals."""
    y = np.asarray(y, dtype=float)
    basis = make_basis(p, K)
    if basis.size < 3:
        raise ValueError("convexity constraint needs K + p >= 3")
    d = _design(x, basis, y.size)
    sol = solve(ConeProblem(d.Lambda, d.ybar(y)), tol=tol)
    return FittedSpline(basis, sol.b_hat, provenance, sigma_used, sol)


def fit_fixed_r(x, y, r: float, L: float, sigma: float, mode: str = "sup", tol: float = 1e-9) -> FittedSpline:
    y = np.asarray(y, dtype=float)
    K = optimal_Kn(r, L, sigma, y.size, mode)
    return fit_spline(x, y, degree_for(r), K, tol, ("fixed_r", r), sigma)


def fit_unconstrained(x, y, K: int, p: int) -> FittedSpline:
    """Least-squares regression spline without the shape constraint."""
    y = np.asarray(y, dtype=float)
    if y.size < K + p:
        raise ValueError("need n >= K + p")
    basis = make_basis(p, K)
    d = _design(x, basis, y.size)
    ev = np.linalg.eigvalsh(d.Lambda)
    if ev[0] <= 1e-12 * ev[-1]:
        raise np.linalg.LinAlgError("design is rank deficient")
    coeffs = np.linalg.solve(d.Lambda, d.ybar(y))
    return FittedSpline(basis, coeffs, ("unconstrained", None))


def sigma_mle(y, fit: FittedSpline, x=None) -> float:
    """Variance MLE: mean squared residual of ``fit`` at the design points (returns sigma^2)."""
    y = np.asarray(y, dtype=float)
    x = splines.design_points(y.size) if x is None else np.asarray(x, dtype=float)
    resid = y - fit(x)
    return float(resid @ resid / y.size)


def pilot_fit(x, y) -> FittedSpline:
    """Piecewise-linear convex fit with ``K = ceil(n^(1/3))`` intervals."""
    y = np.asarray(y, dtype=float)
    K = max(3, math.ceil(y.size ** (1 / 3) - 1e-9))
    return fit_spline(x, y, 1, K, provenance=("pilot", None))


def pilot_sigma(x, y) -> float:
    return math.sqrt(sigma_mle(y, pilot_fit(x, y), x))


# ---------------------------------------------------------------------------
# sup-norm adaptation


def lepski_grid(n: int) -> list[float]:
    if n < 3:
        raise ValueError("need n >= 3")
    tau = math.ceil(math.sqrt(math.log(n)))
    return [1 + j / tau for j in range(tau + 1)]


def default_constants(n: int, L: float, sigma: float) -> tuple[float, float]:
    """Default ``(C1, C2)``.

    ``C2`` is read off the design: the largest coefficient standard deviation
    of the unconstrained piecewise-linear fit is
    ``sigma * sqrt(max_k (Lambda^-1)_kk / beta_n)``, written as
    ``C2 * sigma * sqrt(K/n)``. ``C1 = 1/4`` bounds the sup-distance between a
    Lipschitz function and its piecewise-linear least-squares fit in units of
    ``L / K`` on uniform knots.
    """
    K = optimal_Kn(1.5, L, sigma, n, "sup")
    d = splines.uniform_design(make_basis(1, K), n)
    lam_inv = np.linalg.inv(d.Lambda)
    C2 = math.sqrt(np.max(np.diag(lam_inv)) * n / (d.beta_n * K))
    return 0.25, C2


def _constants(cfg: AdaptiveConfig, n: int, sigma: float):
    if cfg.C1 is not None and cfg.C2 is not None:
        return cfg.C1, cfg.C2
    C1, C2 = default_constants(n, cfg.L, sigma)
    return (cfg.C1 if cfg.C1 is not None else C1), (cfg.C2 if cfg.C2 is not None else C2)


def knots_for_rate(r: float, n: float, L: float, sigma: float, C1: float, C2: float) -> float:
    """Unrounded knot count balancing bias ``C1 L K^-r`` against the stochastic term."""
    e = 2 / (2 * r + 1)
    return ((C2 / (C1 * r * math.sqrt(2 * (2 * r + 1)))) ** (-e)
            * (sigma / L) ** (-e) * (math.log(n) / n) ** (-1 / (2 * r + 1)))


def psi_terms(r: float, n: float, L: float, sigma: float, C1: float, C2: float, K: float | None = None):
    """``(bias, stochastic)`` summands of ``psi`` at ``K`` (default: the balancing ``K``)."""
    if K is None:
        K = knots_for_rate(r, n, L, sigma, C1, C2)
    bias = C1 * L * K ** (-r)
    stoch = math.sqrt(2 / (2 * r + 1)) * C2 * sigma * math.sqrt(K * math.log(n) / n)
    return bias, stoch


def psi_value(r: float, n: float, L: float, sigma: float, C1: float, C2: float) -> float:
    return sum(psi_terms(r, n, L, sigma, C1, C2))


def psi_closed_form(r: float, n: float, L: float, sigma: float, C1: float, C2: float) -> float:
    """The product-form rate expression; equals ``2 * bias`` at the balancing ``K``."""
    e = 1 / (2 * r + 1)
    return (2 * C1 ** e * (C2 / (r * math.sqrt(2 * (2 * r + 1)))) ** (2 * r * e)
            * L ** e * sigma ** (2 * r * e) * (math.log(n) / n) ** (r * e))


def psi(r: float, n: int, cfg: AdaptiveConfig, sigma: float | None = None) -> float:
    if not 1 <= r <= 2:
        raise ValueError("adaptive rates are defined for r in [1, 2]")
    sigma = cfg.sigma if sigma is None else sigma
    if sigma is None:
        raise ValueError("sigma is required (pass an estimate)")
    C1, C2 = _constants(cfg, n, sigma)
    return psi_value(r, n, cfg.L, sigma, C1, C2)


def sup_distance(f: FittedSpline, g: FittedSpline) -> float:
    """``||f - g||_inf`` on [0, 1]; exact at the union of breakpoints for degree <= 1."""
    if max(f.degree, g.degree) <= 1:
        pts = np.union1d(f.basis.breakpoints, g.basis.breakpoints)
    else:
        K = max(f.num_intervals, g.num_intervals)
        pts = np.union1d(np.linspace(0, 1, 1000 * K + 1),
                         np.union1d(f.basis.breakpoints, g.basis.breakpoints))
    return float(np.max(np.abs(f(pts) - g(pts))))


def lepski_select(dist: np.ndarray, thresholds) -> int:
    """Largest ``k`` with ``dist[k, j] <= thresholds[j]`` for every ``j <= k``."""
    k_hat = 0
    for k in range(len(thresholds)):
        if all(dist[k, j] <= thresholds[j] for j in range(k + 1)):
            k_hat = k
    return k_hat


def adapt_sup(x, y, cfg: AdaptiveConfig, tol: float = 1e-9) -> FittedSpline:
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 64:
        raise ValueError("adaptive sup-norm estimation needs n >= 64")
    sigma = cfg.sigma if cfg.sigma is not None else pilot_sigma(x, y)
    C1, C2 = _constants(cfg, n, sigma)
    grid = lepski_grid(n)
    if cfg.sup_grid_cap is not None:
        grid = grid[: max(1, cfg.sup_grid_cap)]
    fits, Ks, thr = [], [], []
    for r in grid:
        K = int(min(max(round(knots_for_rate(r, n, cfg.L, sigma, C1, C2)), 3), n))
        fits.append(fit_spline(x, y, degree_for(r), K, tol, ("fixed_r", r), sigma))
        Ks.append(K)
        thr.append(LEPSKI_FACTOR * psi_value(r, n, cfg.L, sigma, C1, C2))
    s = len(grid)
    dist = np.zeros((s, s))
    for a in range(s):
        for b in range(a):
            dist[a, b] = dist[b, a] = sup_distance(fits[a], fits[b])
    k_hat = lepski_select(dist, thr)
    chosen = fits[k_hat]
    trace = {
        "grid": grid, "K": Ks, "thresholds": thr, "distances": dist.tolist(),
        "k_hat": k_hat, "r_hat": grid[k_hat], "sigma": sigma, "C1": C1, "C2": C2,
    }
    return FittedSpline(chosen.basis, chosen.coeffs, ("adaptive_sup", grid[k_hat]), sigma,
                        chosen.solution, trace)


# ---------------------------------------------------------------------------
# pointwise adaptation


def binned_means(y, K: int) -> np.ndarray:
    """Means of ``y`` over the bins ``((k-1)/K, k/K]`` of the points ``i/n``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if K < 1 or n % K:
        raise ValueError(f"K={K} must divide n={n}")
    return y.reshape(K, n // K).mean(axis=1)


def zeta_points(n: int, K: int) -> np.ndarray:
    """Average design point of each bin: ``((k-1) M + (M+1)/2) / n`` with ``M = n/K``."""
    if K < 1 or n % K:
        raise ValueError(f"K={K} must divide n={n}")
    M = n // K
    k = np.arange(1, K + 1)
    return ((k - 1) * M + (M + 1) / 2) / n


def convex_fit_p0(ybar) -> np.ndarray:
    """Least-squares convex sequence closest to ``ybar``."""
    ybar = np.asarray(ybar, dtype=float)
    if ybar.size < 3:
        raise ValueError("need at least 3 bins")
    return solve(ConeProblem(np.eye(ybar.size), ybar)).b_hat


def dyadic_levels(n: int, j_cap: int | None = None) -> list[int]:
    """Bin counts ``round(2^j n^(1/5))`` while at least 8 points remain per bin."""
    base = n ** 0.2
    out = []
    j = 0
    while round(2 ** j * base) <= n / 8 and (j_cap is None or j <= j_cap):
        out.append(int(round(2 ** j * base)))
        j += 1
    return out


def adapt_point(x, y, x0: float, cfg: AdaptiveConfig) -> tuple[float, PointwiseTrace]:
    """Pointwise adaptive convex estimate of ``f(x0)``.

    Levels whose indicator window ``d-3 .. d+4`` does not fit in the bins are
    skipped; a :class:`BoundaryError` is raised when no level fits.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if not 0 < x0 < 1:
        raise ValueError("x0 must lie in (0, 1)")
    sigma = cfg.sigma if cfg.sigma is not None else pilot_sigma(x, y)
    levels = dyadic_levels(n, cfg.dyadic_j_cap)
    if not levels:
        raise BoundaryError(f"n={n} is too small for any dyadic level")
    ind, stats, thrs, ests, Ks, ds = [], [], [], [], [], []
    selected = None
    last_tested = None
    for j, K in enumerate(levels):
        M = n // K
        n_used = K * M
        yb = binned_means(y[:n_used], K)
        z = zeta_points(n_used, K) * (n_used / n)
        d = int(np.searchsorted(z, x0, side="left"))  # z[d-1] < x0 <= z[d], 1-based d
        thr = cfg.lam * 2 ** (j / 2 + 1) * n ** (-0.4) * sigma
        Ks.append(K)
        thrs.append(thr)
        if d - 3 < 1 or d + 4 > K:
            ind.append(0)
            stats.append(None)
            ests.append(None)
            ds.append(d if 1 <= d < K else None)
            continue
        ds.append(d)
        # 1-based Delta ybar_k = ybar_k - ybar_{k-1}
        stat = (yb[d + 3] - yb[d + 2]) - (yb[d - 3] - yb[d - 4])
        stats.append(float(stat))
        b = convex_fit_p0(yb)
        ests.append(float(np.interp(x0, z, b)))
        last_tested = j
        if stat <= thr:
            ind.append(1)
            selected = j
            break
        ind.append(0)
    if last_tested is None:
        raise BoundaryError(f"x0={x0} is too close to the boundary for the indicator window at n={n}")
    capped = selected is None
    if capped:
        selected = last_tested
        ind[selected] = 1
    trace = PointwiseTrace(float(x0), selected, ind, stats, thrs, ests, Ks, ds, float(sigma), capped)
    return ests[selected], trace

"""B-spline bases on equally spaced knots, design matrices and the normalized Gram matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_DEGREE = 3


@dataclass(frozen=True)
class SplineBasis:
    """Degree-``p`` B-spline basis on ``[0, 1]`` with ``K`` equal intervals.

    The knot vector is uniform, ``t_i = (i - p) / K`` for ``i = 0..K+2p``,
    extending ``p`` knots past each end of ``[0, 1]``. That gives exactly
    ``K + p`` functions that are nonzero on ``[0, 1]``, all translates of one
    cardinal B-spline, so ``D2 b >= 0`` is equivalent to convexity of the
    spline. (Clamped end knots would give the same count but break that
    equivalence for ``p >= 2``.)
    """

    degree: int
    num_intervals: int
    knots: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.num_intervals + self.degree

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(self.num_intervals + 1) / self.num_intervals

    def __call__(self, x):
        return eval_basis(self, x)


def make_basis(p: int, K: int) -> SplineBasis:
    if not (0 <= int(p) <= MAX_DEGREE) or int(p) != p:
        raise ValueError(f"unsupported spline degree p={p}; expected 0..{MAX_DEGREE}")
    if int(K) != K or K < 2:
        raise ValueError(f"need at least 2 knot intervals, got K={K}")
    p, K = int(p), int(K)
    knots = np.arange(-p, K + p + 1) / K
    knots.setflags(write=False)
    return SplineBasis(p, K, knots)


def interval_index(K: int, x: np.ndarray) -> np.ndarray:
    """Index ``j`` (0-based) of the interval ``(j/K, (j+1)/K]`` holding ``x``.

    ``x = 0`` belongs to the first interval. Values within rounding of a knot
    are snapped to it so that ``i/n`` design points bin exactly.
    """
    t = np.asarray(x, dtype=float) * K
    nearest = np.rint(t)
    on_knot = np.abs(t - nearest) <= 1e-9 * np.maximum(1.0, np.abs(t))
    j = np.where(on_knot, nearest, np.ceil(t)) - 1
    return np.clip(j, 0, K - 1).astype(np.intp)


def local_basis(basis: SplineBasis, x) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis values at each ``x``.

    Returns ``(first, vals)`` where ``vals[i, a]`` is the value of basis
    function ``first[i] + a`` at ``x[i]``; ``vals`` has ``p + 1`` columns.
    Cox-de Boor recursion in the triangular form (Piegl & Tiller, A2.2),
    vectorized over ``x``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and (np.nanmin(x) < 0.0 or np.nanmax(x) > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    p, t = basis.degree, basis.knots
    j = interval_index(basis.num_intervals, x)
    span = j + p  # t[span] <= x <= t[span + 1]
    n = x.size
    vals = np.zeros((n, p + 1))
    vals[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for d in range(1, p + 1):
        left[:, d] = x - t[span + 1 - d]
        right[:, d] = t[span + d] - x
        saved = np.zeros(n)
        for r in range(d):
            denom = right[:, r + 1] + left[:, d - r]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        vals[:, d] = saved
    return j, vals


def eval_basis(basis: SplineBasis, x) -> np.ndarray:
    """Dense basis values: shape ``(K + p,)`` for scalar ``x``, else ``(len(x), K + p)``."""
    scalar = np.ndim(x) == 0
    first, vals = local_basis(basis, x)
    out = np.zeros((first.size, basis.size))
    rows = np.arange(first.size)[:, None]
    out[rows, first[:, None] + np.arange(basis.degree + 1)] = vals
    return out[0] if scalar else out


def evaluate(basis: SplineBasis, coeffs, x) -> np.ndarray:
    """Spline ``sum_k coeffs[k] B_k(x)`` at the points ``x``."""
    coeffs = np.asarray(coeffs, dtype=float)
    first, vals = local_basis(basis, x)
    idx = first[:, None] + np.arange(basis.degree + 1)
    out = np.einsum("ij,ij->i", vals, coeffs[idx])
    return out[0] if np.ndim(x) == 0 else out


def design_points(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / n


@dataclass(frozen=True)
class Design:
    """Design quantities that do not depend on the responses."""

    basis: SplineBasis
    x: np.ndarray = field(repr=False)
    first: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    beta_n: float
    Lambda: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def X(self) -> np.ndarray:
        out = np.zeros((self.n, self.basis.size))
        rows = np.arange(self.n)[:, None]
        out[rows, self.first[:, None] + np.arange(self.basis.degree + 1)] = self.vals
        return out

    def xty(self, y) -> np.ndarray:
        """``X^T y`` using the banded layout."""
        y = np.asarray(y, dtype=float)
        m, p = self.basis.size, self.basis.degree
        out = np.zeros(m)
        for a in range(p + 1):
            out += np.bincount(self.first + a, weights=self.vals[:, a] * y, minlength=m)
        return out

    def ybar(self, y) -> np.ndarray:
        return self.xty(y) / self.beta_n

    def fitted(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        idx = self.first[:, None] + np.arange(self.basis.degree + 1)
        return np.einsum("ij,ij->i", self.vals, coeffs[idx])


@dataclass(frozen=True)
class DesignBundle:
    """Design matrix, normalizer ``beta_n``, ``Lambda = X^T X / beta_n`` and ``ybar = X^T y / beta_n``."""

    X: np.ndarray = field(repr=False)
    beta_n: float
    Lambda: np.ndarray = field(repr=False)
    ybar: np.ndarray = field(repr=False)


def _gram(first, vals, m, p):
    G = np.zeros((m, m))
    for a in range(p + 1):
        for c in range(p + 1):
            np.add.at(G, (first + a, first + c), vals[:, a] * vals[:, c])
    return G


def design_from_points(basis: SplineBasis, x) -> Design:
    x = np.asarray(x, dtype=float)
    first, vals = local_basis(basis, x)
    m, p = basis.size, basis.degree
    gram = _gram(first, vals, m, p)
    col_sq = np.diag(gram)
    # sum_i B_k(x_i)^2 over the interior columns k = p..K-1 (0-based); they
    # coincide when n/K is an integer, the max keeps |Lambda_ij| <= 1 otherwise.
    interior = col_sq[p : basis.num_intervals]
    beta_n = float(interior.max() if interior.size else col_sq.max())
    if beta_n <= 0:
        raise ValueError("design has an empty interior basis column")
    Lam = gram / beta_n
    Lam = 0.5 * (Lam + Lam.T)
    for arr in (x, first, vals, Lam):
        arr.setflags(write=False)
    return Design(basis, x, first, vals, beta_n, Lam)


@lru_cache(maxsize=256)
def _uniform_design(p: int, K: int, n: int) -> Design:
    return design_from_points(make_basis(p, K), design_points(n))


def uniform_design(basis: SplineBasis, n: int) -> Design:
    """Cached design at the equispaced points ``x_i = i/n``."""
    if n < basis.num_intervals:
        raise ValueError(f"sample size n={n} is smaller than K={basis.num_intervals}")
    return _uniform_design(basis.degree, basis.num_intervals, int(n))


def build_design(basis: SplineBasis, n: int, y) -> DesignBundle:
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError(f"y must have length n={n}")
    d = uniform_design(basis, n)
    return DesignBundle(d.X, d.beta_n, d.Lambda, d.ybar(y))


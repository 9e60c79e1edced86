"""Numerical checks of the matrix facts behind the uniform Lipschitz bound.

For an active set ``alpha`` with selection matrix ``F`` these verify that
``F F^T`` is tridiagonal, nonnegative and strictly diagonally dominant, that
its row sums equal the row sums ``eta`` of ``F``, that the spectrum of
``diag(1/eta) F F^T`` lies in ``[1/3, 1]``, and track
``||F^T (F Lambda F^T)^{-1} F||_inf`` across knot counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cone_qp import build_F_alpha, selection_matrix
from .splines import make_basis, uniform_design

EIG_TOL = 1e-10
ROWSUM_TOL = 1e-12
GROWTH_LIMIT = 1.5


@dataclass
class StructureCheck:
    passed: bool
    tridiagonal: bool
    nonnegative: bool
    dominant: bool
    witness: str = ""


def check_FF_structure(alpha, m: int) -> StructureCheck:
    F = build_F_alpha(alpha, m)
    G = F @ F.T
    ell = G.shape[0]
    i, j = np.indices(G.shape)
    off_band = np.abs(i - j) > 1
    tri = bool(np.all(G[off_band] == 0.0))
    nonneg = bool(np.all(G >= 0.0))
    offsum = np.abs(G).sum(axis=1) - np.abs(np.diag(G))
    slack = np.diag(G) - offsum
    dom = bool(np.all(slack > 0.0))
    witness = ""
    if not tri:
        r, c = np.argwhere(off_band & (G != 0))[0]
        witness = f"entry ({r},{c}) = {G[r, c]:g} outside tridiagonal band"
    elif not nonneg:
        r, c = np.argwhere(G < 0)[0]
        witness = f"negative entry ({r},{c}) = {G[r, c]:g}"
    elif not dom:
        r = int(np.argmin(slack))
        witness = f"row {r} of {ell}: diagonal minus off-diagonal sum = {slack[r]:g}"
    return StructureCheck(tri and nonneg and dom, tri, nonneg, dom, witness)


def row_sum_identity(alpha, m: int, tol: float = ROWSUM_TOL) -> bool:
    F = build_F_alpha(alpha, m)
    eta = F.sum(axis=1)
    return bool(np.max(np.abs((F @ F.T).sum(axis=1) - eta)) <= tol)


def eig_sandwich(alpha, m: int) -> tuple[float, float]:
    """Extreme eigenvalues of ``diag(1/eta) F F^T`` via its symmetric similar form."""
    F = build_F_alpha(alpha, m)
    s = 1.0 / np.sqrt(F.sum(axis=1))
    S = s[:, None] * (F @ F.T) * s[None, :]
    ev = np.linalg.eigvalsh(S)
    return float(ev[0]), float(ev[-1])


def g_inf_norm(alpha, Lam) -> float:
    m = Lam.shape[0]
    G = selection_matrix(build_F_alpha(alpha, m), Lam).G
    return float(np.abs(G).sum(axis=1).max())


def all_alphas(m: int):
    idx = range(m - 2)
    return itertools.chain.from_iterable(itertools.combinations(idx, k) for k in range(m - 1))


def structured_alphas(m: int) -> list[tuple[int, ...]]:
    """Patterns that exercise long runs: empty, all-active, alternating, one long central run."""
    n = m - 2
    run = tuple(range(n // 4, n - n // 4))
    return [(), tuple(range(n)), tuple(range(0, n, 2)), tuple(range(1, n, 2)), run]


def sample_alphas(m: int, count: int, rng: np.random.Generator, structured: bool = True):
    """Exhaustive when ``m <= 10``; otherwise structured patterns plus Bernoulli(1/2) subsets."""
    if m <= 10:
        return list(all_alphas(m))
    out = structured_alphas(m) if structured else []
    while len(out) < count:
        mask = rng.random(m - 2) < 0.5
        out.append(tuple(int(i) for i in np.flatnonzero(mask)))
    return out[:count] if count >= 1 else out


@dataclass
class LipschitzReport:
    p: int
    kn_grid: list[int]
    alphas_per_kn: list[int]
    sampling: list[str]
    max_inf_norm_G: list[float]
    eig_min: float
    eig_max: float
    structure_violations: int
    rowsum_violations: int
    eig_violations: int
    records: list[dict] = field(default_factory=list, repr=False)

    @property
    def growth_ratio(self) -> float:
        v = np.asarray(self.max_inf_norm_G)
        return float(v.max() / v.min())

    @property
    def growth_flag(self) -> bool:
        return self.max_inf_norm_G[-1] / self.max_inf_norm_G[0] > GROWTH_LIMIT

    @property
    def passed(self) -> bool:
        return (
            self.structure_violations == 0
            and self.rowsum_violations == 0
            and self.eig_violations == 0
            and not self.growth_flag
        )


def inf_norm_sweep(p: int, kn_grid, alphas_per_kn: int = 200, seed: int = 0,
                   n_per_interval: int = 64, check_structure: bool = True) -> LipschitzReport:
    """Max over sampled active sets of ``||G_alpha||_inf`` for each ``K_n``.

    ``Lambda`` comes from the equispaced design with ``n = 64 K_n``. Each
    sampled ``alpha`` is also run through the structural checks.
    """
    kn_grid = [int(k) for k in kn_grid]
    if not kn_grid:
        raise ValueError("empty K_n grid")
    rng = np.random.default_rng(seed)
    maxima, counts, modes, records = [], [], [], []
    lo, hi = np.inf, -np.inf
    sv = rv = ev = 0
    for K in kn_grid:
        basis = make_basis(p, K)
        m = basis.size
        Lam = uniform_design(basis, n_per_interval * K).Lambda
        alphas = sample_alphas(m, alphas_per_kn, rng)
        mode = "exhaustive" if m <= 10 else "random"
        norms = []
        for alpha in alphas:
            norms.append(g_inf_norm(alpha, Lam))
            if check_structure:
                sv += not check_FF_structure(alpha, m).passed
                rv += not row_sum_identity(alpha, m)
                a, b = eig_sandwich(alpha, m)
                ev += not (1 / 3 - EIG_TOL <= a and b <= 1 + EIG_TOL)
                lo, hi = min(lo, a), max(hi, b)
        worst = int(np.argmax(norms))
        maxima.append(float(norms[worst]))
        counts.append(len(alphas))
        modes.append(mode)
        records.append({
            "p": p, "K_n": K, "m": m, "n": n_per_interval * K, "alphas": len(alphas),
            "sampling": mode, "max_inf_norm_G": float(norms[worst]),
            "mean_inf_norm_G": float(np.mean(norms)), "argmax_alpha_size": len(alphas[worst]),
            "structure_violations": sv, "rowsum_violations": rv, "eig_violations": ev,
        })
    return LipschitzReport(p, kn_grid, counts, modes, maxima, float(lo), float(hi), sv, rv, ev, records)


def empirical_lipschitz(p: int, K: int, pairs: int = 50, seed: int = 0, n_per_interval: int = 64,
                        step: float = 1e-6) -> float:
    """Largest observed ``||b(u) - b(v)||_inf / ||u - v||_inf`` over sampled pairs.

    Each ``u`` is a noisy convex profile. Its partner is either a random
    perturbation or a small step along the sign pattern of the heaviest row
    of ``G`` at ``u``'s active set, which attains the local constant when the
    active set is preserved.
    """
    from .cone_qp import ConeProblem, solve

    rng = np.random.default_rng(seed)
    basis = make_basis(p, K)
    d = uniform_design(basis, n_per_interval * K)
    grid = np.linspace(0, 1, basis.size)
    worst = 0.0
    for _ in range(pairs):
        base = 0.5 * (grid - rng.random()) ** 2
        u = base + rng.normal(scale=0.05, size=basis.size)
        su = solve(ConeProblem(d.Lambda, u))
        G = selection_matrix(build_F_alpha(su.alpha, basis.size), d.Lambda).G
        row = int(np.argmax(np.abs(G).sum(axis=1)))
        directions = (np.sign(G[row]), rng.normal(size=basis.size))
        for direction in directions:
            v = u + step * direction / np.max(np.abs(direction))
            bv = solve(ConeProblem(d.Lambda, v)).b_hat
            worst = max(worst, np.max(np.abs(su.b_hat - bv)) / np.max(np.abs(u - v)))
    return float(worst)

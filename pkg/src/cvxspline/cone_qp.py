"""Least squares over the convexity cone ``{b : D2 b >= 0}``.

Constraint ``i`` (0-based) is ``b[i] - 2 b[i+1] + b[i+2] >= 0``. Active sets
are tuples of such 0-based constraint indices.

The solver is a primal active-set method. On a working set ``alpha`` the
coefficients are restricted to ``b = F_alpha^T c``, where the rows of
``F_alpha`` are piecewise-linear "hat" vectors over the free indices, so the
equality-constrained subproblem is the reduced system
``F Lambda F^T c = F ybar``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


class SolverError(RuntimeError):
    """Active-set iteration cap reached; ``solution`` holds the best iterate."""

    def __init__(self, msg, solution=None):
        super().__init__(msg)
        self.solution = solution


class SingularReducedSystem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ConeProblem:
    Lambda: np.ndarray = field(repr=False)
    ybar: np.ndarray = field(repr=False)

    def __post_init__(self):
        Lam = np.asarray(self.Lambda, dtype=float)
        ybar = np.asarray(self.ybar, dtype=float)
        m = ybar.shape[0]
        if m < 3:
            raise ValueError("the convexity cone needs dimension m >= 3")
        if Lam.shape != (m, m):
            raise ValueError(f"Lambda has shape {Lam.shape}, expected {(m, m)}")
        try:
            np.linalg.cholesky(0.5 * (Lam + Lam.T))
        except np.linalg.LinAlgError:
            raise ValueError("Lambda is not positive definite") from None
        object.__setattr__(self, "Lambda", Lam)
        object.__setattr__(self, "ybar", ybar)

    @property
    def m(self) -> int:
        return self.ybar.shape[0]

    def objective(self, b) -> float:
        b = np.asarray(b, dtype=float)
        return float(0.5 * b @ self.Lambda @ b - b @ self.ybar)

    def scaled(self, t: float) -> "ConeProblem":
        return ConeProblem(self.Lambda, t * self.ybar)


@dataclass(frozen=True)
class Certificate:
    """Residuals of the complementarity optimality conditions at ``b``."""

    primal_violation: float
    multiplier_negativity: float
    complementarity_gap: float
    boundary_sum: float
    boundary_weighted: float
    tol: float

    @property
    def residuals(self) -> tuple[float, ...]:
        return (
            self.primal_violation,
            self.multiplier_negativity,
            self.complementarity_gap,
            self.boundary_sum,
            self.boundary_weighted,
        )

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals)

    def as_dict(self) -> dict:
        return {
            "primal_violation": self.primal_violation,
            "multiplier_negativity": self.multiplier_negativity,
            "complementarity_gap": self.complementarity_gap,
            "boundary_sum": self.boundary_sum,
            "boundary_weighted": self.boundary_weighted,
            "tol": self.tol,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ConeSolution:
    b_hat: np.ndarray = field(repr=False)
    alpha: tuple[int, ...]
    kkt: Certificate
    iterations: int
    certified: bool = True


@dataclass(frozen=True)
class SelectionMatrix:
    F: np.ndarray = field(repr=False)
    G: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# cone geometry


def second_diff_matrix(m: int) -> np.ndarray:
    if m < 3:
        raise ValueError("second differences need m >= 3")
    D = np.zeros((m - 2, m))
    i = np.arange(m - 2)
    D[i, i] = 1.0
    D[i, i + 1] = -2.0
    D[i, i + 2] = 1.0
    return D


def second_diff(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b[:-2] - 2.0 * b[1:-1] + b[2:]


def cone_generators(m: int) -> list[np.ndarray]:
    """Generators ``v1, -v1, v2, -v2, v3, ..., vm`` of the convexity cone."""
    if m < 3:
        raise ValueError("the convexity cone needs dimension m >= 3")
    k = np.arange(m, dtype=float)
    v1 = 1.0 - k
    v2 = k.copy()
    gens = [v1, -v1, v2, -v2]
    for j in range(2, m):
        v = np.zeros(m)
        v[j:] = np.arange(1, m - j + 1)
        gens.append(v)
    return gens


def cone_reconstruction(b) -> np.ndarray:
    """Rebuild ``b`` from the nonnegative combination of cone generators."""
    b = np.asarray(b, dtype=float)
    m = b.size
    gens = cone_generators(m)
    out = max(0.0, b[0]) * gens[0] + max(0.0, -b[0]) * gens[1]
    out = out + max(0.0, b[1]) * gens[2] + max(0.0, -b[1]) * gens[3]
    for j, d2 in enumerate(second_diff(b)):
        out = out + d2 * gens[4 + j]
    return out


def _cumsum2(v):
    return np.cumsum(np.cumsum(v))


def kkt_certificate(problem: ConeProblem, b, tol: float = 1e-9, relative: bool = True) -> Certificate:
    """Residuals of ``0 <= D2 b  _|_  (C C (Lambda b - ybar))[:m-2] >= 0`` and the
    two boundary equations ``sum(v) = (C C v)[m-1] = 0``, ``v = Lambda b - ybar``.

    ``C`` is the lower-triangular matrix of ones, so ``C C v`` is a double
    cumulative sum. With ``relative`` the tolerance is scaled by
    ``max(1, ||ybar||_inf)``.
    """
    b = np.asarray(b, dtype=float)
    v = problem.Lambda @ b - problem.ybar
    d2 = second_diff(b)
    w = _cumsum2(v)
    mult = w[:-2]
    scale = max(1.0, float(np.max(np.abs(problem.ybar)))) if relative else 1.0
    return Certificate(
        primal_violation=float(max(0.0, -d2.min())),
        multiplier_negativity=float(max(0.0, -mult.min())),
        complementarity_gap=float(abs(d2 @ mult)),
        boundary_sum=float(abs(v.sum())),
        boundary_weighted=float(abs(w[-1])),
        tol=tol * scale,
    )


def multipliers(problem: ConeProblem, b) -> np.ndarray:
    v = problem.Lambda @ np.asarray(b, dtype=float) - problem.ybar
    return _cumsum2(v)[:-2]


# ---------------------------------------------------------------------------
# selection matrices


def _check_alpha(alpha, m):
    alpha = tuple(sorted(set(int(a) for a in alpha)))
    if alpha and (alpha[0] < 0 or alpha[-1] > m - 3):
        raise ValueError(f"active indices must lie in 0..{m - 3}")
    return alpha


def active_runs(alpha) -> list[tuple[int, int]]:
    """Maximal runs ``(first, last)`` of consecutive active constraints."""
    runs = []
    for a in sorted(alpha):
        if runs and a == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], a)
        else:
            runs.append((a, a))
    return runs


def block_partition(alpha, m: int) -> list[tuple[list[int], list[int]]]:
    """Partition ``0..m-1`` into blocks with their breakpoint ("vartheta") sets.

    A run of active constraints ``i..j`` makes ``b[i..j+2]`` affine; runs that
    share an endpoint are merged into one block whose breakpoints are the run
    endpoints. Every other index is a singleton block.
    """
    alpha = _check_alpha(alpha, m)
    pieces = [list(range(i, j + 3)) for i, j in active_runs(alpha)]
    covered = set(itertools.chain.from_iterable(pieces))
    pieces += [[i] for i in range(m) if i not in covered]
    pieces.sort(key=lambda s: s[0])

    blocks = []
    for piece in pieces:
        if blocks and len(piece) > 1 and blocks[-1][0][-1] == piece[0] and len(blocks[-1][0]) > 1:
            members, marks = blocks[-1]
            members.extend(piece[1:])
            marks.append(piece[-1])
        elif len(piece) > 1:
            blocks.append((list(piece), [piece[0], piece[-1]]))
        else:
            blocks.append((list(piece), [piece[0]]))
    return blocks


def _block_F(members, marks):
    if len(members) == 1:
        return np.ones((1, 1))
    start = members[0]
    Fk = np.zeros((len(marks), len(members)))
    for r, t in enumerate(marks):
        Fk[r, t - start] = 1.0
    for r in range(len(marks) - 1):
        lo, hi = marks[r], marks[r + 1]
        h = hi - lo
        s = np.arange(1, h)
        Fk[r, lo - start + s] = (h - s) / h  # h-vector: (h-1)/h, ..., 1/h
        Fk[r + 1, lo - start + s] = s / h  # h~-vector: 1/h, ..., (h-1)/h
    return Fk


def build_F_alpha(alpha, m: int) -> np.ndarray:
    """Row-independent ``F_alpha`` with ``m - |alpha|`` rows, assembled block by block."""
    blocks = block_partition(alpha, m)
    Fks = [_block_F(members, marks) for members, marks in blocks]
    return sla.block_diag(*Fks)


def free_indices(alpha, m: int) -> np.ndarray:
    """Coefficient indices not forced to be an average of their neighbours."""
    alpha = _check_alpha(alpha, m)
    mask = np.ones(m, dtype=bool)
    mask[np.asarray(alpha, dtype=np.intp) + 1] = False
    return np.flatnonzero(mask)


def hat_F(alpha, m: int) -> sp.csr_matrix:
    """``F_alpha`` as sparse piecewise-linear interpolation weights over the free indices."""
    s = free_indices(alpha, m)
    rows, cols, vals = [], [], []
    ell = s.size
    for j in range(ell):
        rows.append(j)
        cols.append(s[j])
        vals.append(1.0)
    for j in range(ell - 1):
        lo, hi = s[j], s[j + 1]
        h = hi - lo
        if h < 2:
            continue
        t = np.arange(1, h)
        rows.extend([j] * (h - 1) + [j + 1] * (h - 1))
        cols.extend(list(lo + t) * 2)
        vals.extend(list((h - t) / h) + list(t / h))
    return sp.csr_matrix((vals, (rows, cols)), shape=(ell, m))


def _reduced_factor(F, Lam):
    Fd = F.toarray() if sp.issparse(F) else np.asarray(F)
    A = F @ (F @ Lam).T if sp.issparse(F) else Fd @ Lam @ Fd.T
    A = np.asarray(A)
    A = 0.5 * (A + A.T)
    try:
        c, low = sla.cho_factor(A, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularReducedSystem("reduced system F Lambda F^T is not positive definite") from exc
    d = np.abs(np.diag(c))
    if d.min() == 0 or (d.max() / d.min()) ** 2 > COND_LIMIT:
        raise SingularReducedSystem(
            f"reduced system F Lambda F^T is numerically singular (cond ~ {(d.max() / max(d.min(), 1e-300)) ** 2:.3g})"
        )
    return (c, low)


def selection_matrix(F, Lam) -> SelectionMatrix:
    """``G = F^T (F Lambda F^T)^{-1} F``."""
    Fd = F.toarray() if sp.issparse(F) else np.asarray(F, dtype=float)
    fac = _reduced_factor(Fd, np.asarray(Lam, dtype=float))
    G = Fd.T @ sla.cho_solve(fac, Fd, check_finite=False)
    G = 0.5 * (G + G.T)
    return SelectionMatrix(Fd, G)


def piece_solution(problem: ConeProblem, alpha) -> np.ndarray:
    """Minimizer over ``{b : (D2 b)_alpha = 0}`` (sign restrictions dropped)."""
    F = hat_F(alpha, problem.m)
    fac = _reduced_factor(F, problem.Lambda)
    c = sla.cho_solve(fac, F @ problem.ybar, check_finite=False)
    return F.T @ c


# ---------------------------------------------------------------------------
# solvers


def _geometric_alpha(b, atol):
    return tuple(int(i) for i in np.flatnonzero(np.abs(second_diff(b)) <= atol))


def solve(problem: ConeProblem, tol: float = 1e-9, max_iter: int | None = None) -> ConeSolution:
    """Primal active-set solve of ``min 1/2 b'Lb - b'ybar`` subject to ``D2 b >= 0``.

    Raises ``SolverError`` (carrying the best feasible iterate) when the
    iteration cap ``10 m`` is reached without a passing certificate.
    """
    m = problem.m
    if max_iter is None:
        max_iter = 10 * m
    scale = max(1.0, float(np.max(np.abs(problem.ybar))))
    atol = tol * scale
    step_tol = 1e-14 * scale * m

    # Warm start: the unconstrained minimizer, then add violated constraints
    # until the equality-constrained piece is feasible.
    W: set[int] = set()
    b = piece_solution(problem, ())
    iters = 0
    while True:
        viol = np.flatnonzero(second_diff(b) < -atol)
        if viol.size == 0:
            break
        W.update(int(i) for i in viol)
        b = piece_solution(problem, tuple(sorted(W)))
        iters += 1

    seen: set[tuple[int, ...]] = set()
    bland = False
    best = b
    for _ in range(max_iter):
        iters += 1
        key = tuple(sorted(W))
        b_star = piece_solution(problem, key)
        step = b_star - b
        if np.max(np.abs(step)) <= step_tol:
            b = b_star
            best = b
            mu = multipliers(problem, b)
            if not W:
                break
            wl = np.array(key)
            neg = wl[mu[wl] < -atol]
            if neg.size == 0:
                break
            if key in seen:
                bland = True
            seen.add(key)
            # lowest index among the most negative (or, under Bland, the lowest negative)
            drop = int(neg[0]) if bland else int(wl[np.argmin(mu[wl])])
            W.discard(drop)
            continue
        d2b = second_diff(b)
        d2p = second_diff(step)
        t, block = 1.0, None
        for i in np.flatnonzero(d2p < 0):
            if int(i) in W:
                continue
            ratio = max(0.0, d2b[i]) / -d2p[i]
            if ratio < t:
                t, block = ratio, int(i)
        b = b + t * step
        best = b
        if block is not None:
            W.add(block)
    else:
        cert = kkt_certificate(problem, best, tol)
        sol = ConeSolution(best, _geometric_alpha(best, atol), cert, iters, certified=cert.passed)
        if cert.passed:
            return sol
        raise SolverError(f"active-set iteration cap {max_iter} reached for m={m}", sol)

    cert = kkt_certificate(problem, b, tol)
    if not cert.passed:
        log.debug("certificate residuals %s exceed %g", cert.residuals, cert.tol)
        raise SolverError("active-set terminated without a passing certificate", ConeSolution(
            b, _geometric_alpha(b, atol), cert, iters, certified=False))
    return ConeSolution(b, _geometric_alpha(b, atol), cert, iters)


def enumerate_oracle(problem: ConeProblem, tol: float = 1e-9) -> ConeSolution:
    """Exact optimum by checking every active set through the full KKT system.

    For each ``alpha`` solves ``[[Lambda, -D_a^T], [D_a, 0]] [b; mu] = [ybar; 0]``
    and keeps the first piece with ``D2 b >= 0`` and ``mu >= 0``. Independent of
    ``F_alpha``; only for ``m <= 12``.
    """
    m = problem.m
    if m > 12:
        raise ValueError("enumeration is limited to m <= 12")
    D = second_diff_matrix(m)
    scale = max(1.0, float(np.max(np.abs(problem.ybar))))
    atol = 1e-9 * scale
    best = None
    for k in range(m - 1):
        for alpha in itertools.combinations(range(m - 2), k):
            Da = D[list(alpha)]
            K = np.block([[problem.Lambda, -Da.T], [Da, np.zeros((k, k))]])
            rhs = np.concatenate([problem.ybar, np.zeros(k)])
            sol = np.linalg.solve(K, rhs)
            b, mu = sol[:m], sol[m:]
            if second_diff(b).min() >= -atol and (k == 0 or mu.min() >= -atol):
                cand = (problem.objective(b), alpha, b)
                if best is None or cand[0] < best[0] - 1e-15 * scale:
                    best = cand
    if best is None:
        raise RuntimeError("no active set satisfied the optimality conditions")
    _, alpha, b = best
    return ConeSolution(b, _geometric_alpha(b, atol), kkt_certificate(problem, b, tol), 0)

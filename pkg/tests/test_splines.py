import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvxspline.splines import (build_design, design_points, eval_basis, evaluate, interval_index,
                               make_basis, uniform_design)


def cox_de_boor(t, i, p, x):
    """Textbook recursion on half-open (t_i, t_{i+1}] supports."""
    if p == 0:
        return 1.0 if t[i] < x <= t[i + 1] else 0.0
    out = 0.0
    if t[i + p] > t[i]:
        out += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x)
    if t[i + p + 1] > t[i + 1]:
        out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x)
    return out


def test_piecewise_constant_indicators():
    b = make_basis(0, 4)
    assert b.size == 4
    np.testing.assert_array_equal(eval_basis(b, 0.3), [0, 1, 0, 0])
    # right-closed bins, x = 0 falls in the first
    np.testing.assert_array_equal(eval_basis(b, 0.25), [1, 0, 0, 0])
    np.testing.assert_array_equal(eval_basis(b, 0.0), [1, 0, 0, 0])
    np.testing.assert_array_equal(eval_basis(b, 1.0), [0, 0, 0, 1])


def test_hat_functions():
    b = make_basis(1, 4)
    assert b.size == 5
    assert eval_basis(b, 0.25)[1] == 1.0
    np.testing.assert_array_equal(eval_basis(b, 0.5), [0, 0, 1, 0, 0])
    np.testing.assert_allclose(eval_basis(b, 0.125), [0.5, 0.5, 0, 0, 0])


def test_quadratic_against_hand_recursion():
    b = make_basis(2, 4)
    assert b.size == 6
    got = eval_basis(b, 0.375)
    oracle = [cox_de_boor(b.knots, k, 2, 0.375) for k in range(6)]
    np.testing.assert_allclose(got, oracle, atol=1e-15)
    # midpoint of a cell: the cardinal quadratic takes 1/8, 3/4, 1/8
    np.testing.assert_allclose(got, [0, 0.125, 0.75, 0.125, 0, 0], atol=1e-15)


@pytest.mark.parametrize("p", [0, 1, 2, 3])
@pytest.mark.parametrize("K", [2, 5, 9])
def test_matches_recursion_oracle(p, K):
    b = make_basis(p, K)
    xs = np.linspace(0.0, 1.0, 37)[1:]
    got = eval_basis(b, xs)
    oracle = np.array([[cox_de_boor(b.knots, k, p, x) for k in range(b.size)] for x in xs])
    np.testing.assert_allclose(got, oracle, atol=1e-13)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_basis(4, 5)
    with pytest.raises(ValueError):
        make_basis(1, 1)
    with pytest.raises(ValueError):
        eval_basis(make_basis(1, 4), 1.2)
    with pytest.raises(ValueError):
        eval_basis(make_basis(1, 4), -0.01)
    with pytest.raises(ValueError):
        uniform_design(make_basis(1, 8), 4)


@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_partition_of_unity(p, rng):
    x = rng.random(10_000)
    for K in (2, 7, 32):
        B = eval_basis(make_basis(p, K), x)
        assert B.min() >= 0
        assert np.max(np.abs(B.sum(axis=1) - 1)) <= 1e-12
        assert np.max((B > 0).sum(axis=1)) <= p + 1


@given(p=st.integers(0, 3), K=st.integers(2, 40), x=st.floats(0, 1))
def test_basis_invariants_property(p, K, x):
    v = eval_basis(make_basis(p, K), x)
    assert v.shape == (K + p,)
    assert np.all(v >= 0)
    assert abs(v.sum() - 1) <= 1e-12
    assert np.count_nonzero(v) <= p + 1


@given(K=st.integers(2, 50), i=st.integers(1, 400))
def test_interval_index_on_design_points(K, i):
    n = 400
    j = interval_index(K, np.array([i / n]))[0]
    assert j / K < i / n <= (j + 1) / K + 1e-15


def test_linear_design_is_tridiagonal():
    d = build_design(make_basis(1, 2), 4, np.zeros(4))
    assert d.Lambda.shape == (3, 3)
    assert d.Lambda[0, 2] == 0 and d.Lambda[2, 0] == 0
    np.testing.assert_array_equal(d.ybar, np.zeros(3))


@pytest.mark.parametrize("p", [0, 1, 2, 3])
@pytest.mark.parametrize("K,n", [(4, 16), (8, 64), (13, 100), (16, 1024)])
def test_lambda_structure(p, K, n):
    d = uniform_design(make_basis(p, K), n)
    Lam = d.Lambda
    assert np.max(np.abs(Lam - Lam.T)) <= 1e-14
    i, j = np.indices(Lam.shape)
    assert np.all(Lam[np.abs(i - j) > p] == 0)
    assert np.max(np.abs(Lam)) <= 1 + 1e-12
    assert np.linalg.eigvalsh(Lam)[0] > 0
    np.testing.assert_allclose(d.X.T @ d.X / d.beta_n, Lam, atol=1e-13)


def test_beta_scaling_against_direct_sum():
    ratios = []
    for K in (4, 8, 16):
        n = 64 * K
        x = design_points(n)
        # direct sum of squared hat values at an interior knot
        k = K // 2
        hat = np.clip(1 - np.abs(x * K - k), 0, None)
        direct = float(np.sum(hat ** 2))
        d = uniform_design(make_basis(1, K), n)
        assert d.beta_n == pytest.approx(direct, rel=1e-12)
        ratios.append(d.beta_n * K / n)
    assert max(ratios) / min(ratios) <= 1.1


def test_ybar_and_fitted(rng):
    basis = make_basis(2, 6)
    n = 120
    y = rng.normal(size=n)
    d = uniform_design(basis, n)
    np.testing.assert_allclose(d.ybar(y), d.X.T @ y / d.beta_n, atol=1e-13)
    c = rng.normal(size=basis.size)
    np.testing.assert_allclose(d.fitted(c), d.X @ c, atol=1e-13)
    np.testing.assert_allclose(evaluate(basis, c, d.x), d.X @ c, atol=1e-13)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_convex_coefficients_give_convex_spline(p, rng):
    # uniform knots: nonnegative second differences of b make the spline convex
    basis = make_basis(p, 9)
    b = np.cumsum(np.cumsum(rng.random(basis.size)))
    xs = np.linspace(0, 1, 2001)
    f = evaluate(basis, b, xs)
    assert np.min(f[:-2] - 2 * f[1:-1] + f[2:]) >= -1e-12

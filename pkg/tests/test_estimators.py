import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvxspline import estimators as est
from cvxspline.cone_qp import ConeProblem, enumerate_oracle, second_diff
from cvxspline.simulation import gen_data, get_function
from cvxspline.splines import design_points, evaluate, make_basis


def test_optimal_kn_examples():
    assert est.optimal_Kn(2, 1, 1, 1024, "point") == 4
    for n in (100, 5000, 10**6):
        assert est.optimal_Kn(2, 1, 1, n, "sup") == max(3, round((n / math.log(n)) ** 0.2))
    assert est.optimal_Kn(2, 1, 10, 64, "sup") == 3
    assert est.optimal_Kn(1, 100, 0.01, 20, "point") == 20
    with pytest.raises(ValueError):
        est.optimal_Kn(5, 1, 1, 100)
    with pytest.raises(ValueError):
        est.optimal_Kn(2, 1, 1, 8)


def test_degree_choice():
    assert [est.degree_for(r) for r in (1, 1.5, 2, 2.5, 3, 4)] == [1, 1, 1, 2, 2, 3]


def test_affine_recovered_exactly():
    x = design_points(512)
    fit = est.fit_fixed_r(x, 0.3 + 2 * x, 2, 1, 0.1)
    grid = np.linspace(0, 1, 1001)
    assert np.max(np.abs(fit(grid) - (0.3 + 2 * grid))) <= 1e-8


def test_bias_decays_like_inverse_square():
    n = 4096
    x = design_points(n)
    Ks = np.array([4, 8, 16, 32])
    grid = np.linspace(0, 1, 1000)
    err = [np.max(np.abs(est.fit_spline(x, x**2, 1, K)(grid) - grid**2)) for K in Ks]
    slope = np.polyfit(np.log(Ks), np.log(err), 1)[0]
    assert -2.2 <= slope <= -1.8


def test_noisy_fit_feasible():
    x, y = gen_data(get_function("f3"), 4096, 0.1, 7)
    fit = est.fit_fixed_r(x, y, 2, 2, 0.1)
    assert second_diff(fit.coeffs).min() >= -1e-9
    assert fit.solution.kkt.passed
    assert fit.provenance == ("fixed_r", 2)
    grid = np.linspace(0, 1, 50)
    np.testing.assert_allclose(fit(grid), evaluate(fit.basis, fit.coeffs, grid))


def test_fit_on_irregular_points(rng):
    x = np.sort(rng.uniform(0.001, 1, 300))
    y = (x - 0.4) ** 2 + 0.01 * rng.normal(size=300)
    fit = est.fit_spline(x, y, 1, 6)
    assert fit.solution.kkt.passed


def test_lepski_grid():
    assert est.lepski_grid(1000) == pytest.approx([1, 4 / 3, 5 / 3, 2])
    assert est.lepski_grid(3) == pytest.approx([1, 1.5, 2])
    for n in (3, 50, 4096, 10**7):
        g = est.lepski_grid(n)
        assert g[0] == 1 and g[-1] == 2
        assert np.allclose(np.diff(g), g[1] - g[0])


def test_psi_closed_form_example():
    n = math.e
    K = est.knots_for_rate(2, n, 1, 1, 1, 1)
    # balancing K at log(n)/n = 1/e
    assert K * (1 / n) ** 0.2 == pytest.approx((1 / (2 * math.sqrt(10))) ** (-0.4), rel=1e-12)
    closed = est.psi_closed_form(2, n, 1, 1, 1, 1)
    assert closed == pytest.approx(2 * (1 / (2 * math.sqrt(10))) ** 0.8 * (1 / n) ** 0.4, rel=1e-12)
    bias, stoch = est.psi_terms(2, n, 1, 1, 1, 1)
    assert closed == pytest.approx(2 * bias, rel=1e-12)
    assert bias + stoch == pytest.approx(2.5 * closed, rel=1e-12)


@given(r=st.floats(1, 2), L=st.floats(0.1, 10), sigma=st.floats(0.01, 2),
       C1=st.floats(0.05, 5), C2=st.floats(0.05, 5), n=st.integers(64, 10**7))
def test_psi_relations(r, L, sigma, C1, C2, n):
    val = est.psi_value(r, n, L, sigma, C1, C2)
    assert val == pytest.approx((2 * r + 1) / 2 * est.psi_closed_form(r, n, L, sigma, C1, C2), rel=1e-9)
    K = est.knots_for_rate(r, n, L, sigma, C1, C2)
    # the balancing K minimizes the two-summand bound
    for f in (0.9, 1.1):
        assert sum(est.psi_terms(r, n, L, sigma, C1, C2, K * f)) >= val * (1 - 1e-12)
    assert est.psi_value(r, 2 * n, L, sigma, C1, C2) < val
    assert est.psi_value(r, n, 2 * L, sigma, C1, C2) == pytest.approx(2 ** (1 / (2 * r + 1)) * val, rel=1e-9)


def test_psi_requires_adaptive_range():
    cfg = est.AdaptiveConfig(L=1, sigma=1, C1=1, C2=1)
    assert est.psi(1.5, 1000, cfg) > 0
    with pytest.raises(ValueError):
        est.psi(2.5, 1000, cfg)


def test_lepski_select_edges():
    d = np.zeros((4, 4))
    assert est.lepski_select(d, [1, 1, 1, 1]) == 3
    d = np.full((4, 4), 10.0)
    np.fill_diagonal(d, 0)
    assert est.lepski_select(d, [1, 1, 1, 1]) == 0


def test_adapt_sup_truncating_grid_keeps_choice():
    x, y = gen_data(get_function("f2"), 2048, 0.1, 11)
    cfg = est.AdaptiveConfig(L=2.1, sigma=0.1)
    fit = est.adapt_sup(x, y, cfg)
    k = fit.trace["k_hat"]
    assert fit.trace["r_hat"] in fit.trace["grid"]
    assert fit.provenance == ("adaptive_sup", fit.trace["r_hat"])
    again = est.adapt_sup(x, y, est.AdaptiveConfig(L=2.1, sigma=0.1, sup_grid_cap=k + 1))
    assert again.trace["r_hat"] == fit.trace["r_hat"]
    np.testing.assert_array_equal(again.coeffs, fit.coeffs)


def test_adapt_sup_small_thresholds_select_first():
    x, y = gen_data(get_function("f3"), 1024, 0.1, 2)
    fit = est.adapt_sup(x, y, est.AdaptiveConfig(L=2, sigma=0.1, C1=1e-9, C2=1e-9))
    assert fit.trace["k_hat"] == 0 and fit.trace["r_hat"] == 1


def test_sup_distance_attained_at_knots(rng):
    basis = make_basis(1, 9)
    f = est.FittedSpline(basis, rng.normal(size=10), ("x", None))
    g = est.FittedSpline(basis, rng.normal(size=10), ("x", None))
    grid = np.linspace(0, 1, 1000 * 9 + 1)
    assert est.sup_distance(f, g) == pytest.approx(np.max(np.abs(f(grid) - g(grid))), abs=1e-12)


def test_binned_means_and_zeta():
    np.testing.assert_allclose(est.binned_means([1, 2, 3, 5], 2), [1.5, 4])
    np.testing.assert_allclose(est.binned_means(np.full(12, 3.5), 4), 3.5)
    np.testing.assert_allclose(est.zeta_points(4, 2), [0.375, 0.875])
    np.testing.assert_allclose(est.zeta_points(7, 7), design_points(7))
    with pytest.raises(ValueError):
        est.binned_means(np.zeros(10), 3)


@given(M=st.integers(1, 20), K=st.integers(1, 40))
def test_binned_linear_data_hits_zeta(M, K):
    n = M * K
    z = est.zeta_points(n, K)
    np.testing.assert_allclose(est.binned_means(design_points(n), K), z, atol=1e-14)
    if K > 1:
        np.testing.assert_allclose(np.diff(z), 1 / K, atol=1e-14)


def test_convex_fit_p0():
    np.testing.assert_allclose(est.convex_fit_p0([0, 1, 0]), [1 / 3] * 3, atol=1e-14)
    seq = np.array([4.0, 1, 0, 1, 4])
    np.testing.assert_allclose(est.convex_fit_p0(seq), seq, atol=1e-14)
    rng = np.random.default_rng(5)
    for _ in range(30):
        yb = rng.normal(size=int(rng.integers(3, 11)))
        ref = enumerate_oracle(ConeProblem(np.eye(yb.size), yb)).b_hat
        np.testing.assert_allclose(est.convex_fit_p0(yb), ref, atol=1e-8)


def test_dyadic_levels():
    lv = est.dyadic_levels(10**5)
    assert lv[0] == 10 and lv[3] == 80
    assert all(K <= 10**5 / 8 for K in lv)
    assert est.dyadic_levels(10**5, j_cap=2) == [10, 20, 40]


def test_adapt_point_affine_exact():
    x = design_points(4096)
    for x0 in (0.3, 0.5, 0.77):
        val, trace = est.adapt_point(x, 1 - 0.5 * x, x0, est.AdaptiveConfig(sigma=0.1))
        assert val == pytest.approx(1 - 0.5 * x0, abs=1e-12)
        assert sum(trace.indicators) == 1


@given(seed=st.integers(0, 10**6), x0=st.floats(0.2, 0.8), n=st.sampled_from([1024, 3000, 8192]))
def test_adapt_point_one_indicator(seed, x0, n):
    x, y = gen_data(get_function("f3"), n, 0.1, seed)
    val, tr = est.adapt_point(x, y, x0, est.AdaptiveConfig(sigma=0.1))
    assert sum(tr.indicators) == 1
    assert tr.indicators[tr.j_selected] == 1
    assert val == tr.estimates[tr.j_selected]


def test_adapt_point_boundary_error():
    x, y = gen_data(get_function("f3"), 512, 0.1, 0)
    with pytest.raises(est.BoundaryError):
        est.adapt_point(x, y, 0.01, est.AdaptiveConfig(sigma=0.1))
    with pytest.raises(ValueError):
        est.adapt_point(x, y, 1.0, est.AdaptiveConfig(sigma=0.1))


def test_lambda_constraint():
    with pytest.raises(ValueError):
        est.AdaptiveConfig(lam=0.6)
    est.AdaptiveConfig(lam=0.675)


def test_sigma_mle_zero_on_exact_fit():
    x = design_points(256)
    fit = est.fit_spline(x, 1 + x, 1, 5)
    assert est.sigma_mle(1 + x, fit) <= 1e-28


@given(seed=st.integers(0, 10**6), c=st.floats(-100, 100))
def test_sigma_mle_shift_invariant(seed, c):
    x, y = gen_data(get_function("f1"), 512, 0.2, seed)
    a = est.sigma_mle(y, est.fit_spline(x, y, 1, 8))
    b = est.sigma_mle(y + c, est.fit_spline(x, y + c, 1, 8))
    assert b == pytest.approx(a, rel=1e-7, abs=1e-12)


def test_sigma_mle_noiseless_decreases():
    vals = []
    for n in (256, 2048, 16384):
        x = design_points(n)
        vals.append(est.sigma_mle(np.exp(x), est.pilot_fit(x, np.exp(x))))
    assert vals[0] > vals[1] > vals[2]


def test_pilot_knots():
    x, y = gen_data(get_function("f3"), 5000, 0.5, 1)
    fit = est.pilot_fit(x, y)
    assert fit.num_intervals == 18 and fit.degree == 1
    assert est.pilot_sigma(x, y) == pytest.approx(math.sqrt(est.sigma_mle(y, fit)))


def test_unconstrained_exact_recovery(rng):
    for p in (1, 2, 3):
        basis = make_basis(p, 7)
        c = rng.normal(size=basis.size)
        x = design_points(400)
        fit = est.fit_unconstrained(x, evaluate(basis, c, x), 7, p)
        np.testing.assert_allclose(fit.coeffs, c, atol=1e-9)
        assert fit.provenance[0] == "unconstrained"


def test_unconstrained_vs_constrained_on_dip():
    x = design_points(400)
    y = x**2 - 0.3 * np.exp(-((x - 0.5) / 0.05) ** 2)
    assert second_diff(est.fit_unconstrained(x, y, 10, 1).coeffs).min() < -1e-3
    assert second_diff(est.fit_spline(x, y, 1, 10).coeffs).min() >= -1e-9


def test_adapt_point_mse_budget_large_n():
    from cvxspline.simulation import EstimatorSpec, mc_risk

    f = get_function("f3")
    ada = mc_risk(EstimatorSpec(kind="adapt_point"), f, [2**15], 0.1, 500, "pointwise", seed=3)
    ora = mc_risk(EstimatorSpec(kind="fixed_r", r=2, mode="point"), f, [2**15], 0.1, 500,
                  "pointwise", seed=3)
    assert ada.failures == [0]
    assert ada.risk[0] <= 3 * ora.risk[0]

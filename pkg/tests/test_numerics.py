import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalkit.numerics import (bootstrap, fwl_residualize, logistic_fit, ols, replicate_rng,
                                robust_cov, with_intercept, wls)
from causalkit.reporting import SeparationError, SingularDesignError, ValidationError


def gauss_solve(A, b):
    """Plain Gaussian elimination with partial pivoting."""
    A = A.astype(float).copy()
    b = b.astype(float).copy()
    n = len(b)
    for k in range(n):
        piv = k + np.argmax(np.abs(A[k:, k]))
        A[[k, piv]], b[[k, piv]] = A[[piv, k]], b[[piv, k]]
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            A[i, k:] -= f * A[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def random_design(n=50, p=3, seed=0):
    rng = np.random.default_rng(seed)
    X = with_intercept(rng.normal(size=(n, p - 1)))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    return X, y


class TestOLS:
    def test_exact_line(self):
        x = np.arange(6.0)
        fit = ols(with_intercept(x), x)
        np.testing.assert_allclose(fit.coefficients, [0, 1], atol=1e-12)
        np.testing.assert_allclose(fit.residuals, 0, atol=1e-12)

    def test_binary_regressor_is_mean_difference(self):
        rng = np.random.default_rng(2)
        z = rng.integers(0, 2, 40).astype(float)
        y = rng.normal(size=40)
        fit = ols(with_intercept(z), y)
        assert fit.coefficients[1] == pytest.approx(y[z == 1].mean() - y[z == 0].mean(), abs=1e-12)

    def test_against_gaussian_elimination(self):
        X, y = random_design()
        beta = gauss_solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(ols(X, y).coefficients, beta, rtol=1e-10)

    def test_orthogonality_and_leverage_sum(self):
        X, y = random_design(80, 4, seed=3)
        fit = ols(X, y)
        assert np.max(np.abs(X.T @ fit.residuals)) < 1e-8 * np.abs(X.T @ y).max()
        assert abs(fit.residuals.sum()) < 1e-9
        assert fit.leverages.sum() == pytest.approx(4, abs=1e-10)

    def test_rank_deficiency_names_column(self):
        X, y = random_design()
        X = np.column_stack([X, X[:, 1] * 2])
        with pytest.raises(SingularDesignError, match="dup"):
            ols(X, y, names=["c", "a", "b", "dup"])


class TestWLS:
    def test_unit_weights_equal_ols(self):
        X, y = random_design()
        np.testing.assert_array_equal(wls(X, y, np.ones(len(y))).coefficients, ols(X, y).coefficients)

    def test_binary_weighted_means(self):
        rng = np.random.default_rng(4)
        z = rng.integers(0, 2, 30).astype(float)
        y, w = rng.normal(size=30), rng.uniform(0.5, 2, 30)
        wm = lambda s: np.sum(w[s] * y[s]) / np.sum(w[s])  # noqa: E731
        fit = wls(with_intercept(z), y, w)
        assert fit.coefficients[1] == pytest.approx(wm(z == 1) - wm(z == 0), abs=1e-12)

    def test_zero_weights_drop_rows(self):
        X, y = random_design(40)
        w = np.ones(40)
        w[:10] = 0
        np.testing.assert_allclose(wls(X, y, w).coefficients, ols(X[10:], y[10:]).coefficients, rtol=1e-10)

    def test_negative_weight(self):
        X, y = random_design()
        w = np.ones(len(y))
        w[0] = -1
        with pytest.raises(ValidationError):
            wls(X, y, w)


class TestLogistic:
    def test_intercept_only(self):
        y = np.array([1, 0, 0, 0] * 5, float)
        fit = logistic_fit(np.ones((20, 1)), y)
        assert fit.coefficients[0] == pytest.approx(np.log(1 / 3), abs=1e-8)

    def test_separation(self):
        x = np.arange(10.0)
        with pytest.raises(SeparationError):
            logistic_fit(with_intercept(x), (x > 4.5).astype(float))

    def test_score_and_mean_at_solution(self):
        rng = np.random.default_rng(5)
        X = with_intercept(rng.normal(size=200))
        y = (rng.uniform(size=200) < 1 / (1 + np.exp(-X @ [0.5, -1]))).astype(float)
        fit = logistic_fit(X, y)
        assert np.max(np.abs(X.T @ (y - fit.fitted_probabilities))) < 1e-8
        assert fit.fitted_probabilities.mean() == pytest.approx(y.mean(), abs=1e-8)
        se = np.sqrt(np.diag(fit.cov))
        assert np.all(np.abs(fit.coefficients - [0.5, -1]) < 3 * se)


class TestRobustCov:
    def test_hc2_slope_is_neyman_variance(self):
        rng = np.random.default_rng(6)
        z = np.repeat([1.0, 0.0], [13, 17])
        y = rng.normal(size=30) + z * rng.normal(size=30)
        v = robust_cov(ols(with_intercept(z), y), "HC2").matrix[1, 1]
        ney = y[z == 1].var(ddof=1) / 13 + y[z == 0].var(ddof=1) / 17
        assert v == pytest.approx(ney, rel=1e-10)

    def test_ordering_and_symmetry(self):
        X, y = random_design(30, 3, seed=7)
        fit = ols(X, y)
        d = {v: robust_cov(fit, v).matrix for v in ("HC0", "HC1", "HC2", "HC3")}
        assert np.all(np.diag(d["HC3"]) >= np.diag(d["HC2"]))
        assert np.all(np.diag(d["HC2"]) >= np.diag(d["HC0"]))
        for m in d.values():
            np.testing.assert_allclose(m, m.T)
        np.testing.assert_allclose(d["HC1"], d["HC0"] * 30 / 27)

    def test_homoskedastic_hc0_close_to_model(self):
        X, y = random_design(5000, 3, seed=8)
        fit = ols(X, y)
        ratio = np.diag(robust_cov(fit, "HC0").matrix) / np.diag(fit.model_cov)
        assert np.all(np.abs(ratio - 1) < 0.1)


class TestFWL:
    def test_matches_joint_fit(self):
        rng = np.random.default_rng(9)
        X1, X2 = rng.normal(size=(100, 2)), with_intercept(rng.normal(size=(100, 2)))
        y = rng.normal(size=100)
        joint = ols(np.column_stack([X1, X2]), y).coefficients[:2]
        np.testing.assert_allclose(fwl_residualize(X1, X2, y), joint, atol=1e-10)

    def test_constant_x2_is_centred_slope(self):
        rng = np.random.default_rng(10)
        x, y = rng.normal(size=50), rng.normal(size=50)
        slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
        assert float(np.ravel(fwl_residualize(x, np.ones((50, 1)), y))[0]) == pytest.approx(slope, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_cochran_identity(self, seed):
        rng = np.random.default_rng(seed)
        n = 40
        x1, x2 = rng.normal(size=n), rng.normal(size=n)
        y = rng.normal(size=n)
        long = ols(with_intercept(np.column_stack([x1, x2])), y).coefficients
        short = ols(with_intercept(x1), y).coefficients[1]
        delta = ols(with_intercept(x1), x2).coefficients[1]
        assert short == pytest.approx(long[1] + delta * long[2], abs=1e-10)


class TestBootstrap:
    def test_mean_se_close_to_analytic(self):
        y = np.random.default_rng(11).normal(1, 1, 100)
        res = bootstrap(y, np.mean, 200, seed=3)
        assert res.se**2 == pytest.approx(y.var(ddof=1) / 100, rel=0.15)

    def test_constant_and_determinism(self):
        assert bootstrap(np.ones(10), np.mean, 20, seed=1).se == 0
        y = np.arange(30.0)
        a, b = bootstrap(y, np.mean, 50, seed=7), bootstrap(y, np.mean, 50, seed=7)
        np.testing.assert_array_equal(a.replicates, b.replicates)

    def test_threads_do_not_change_results(self):
        y = np.arange(30.0)
        a = bootstrap(y, np.median, 40, seed=2, threads=1)
        b = bootstrap(y, np.median, 40, seed=2, threads=4)
        np.testing.assert_array_equal(a.replicates, b.replicates)

    def test_replicate_streams_depend_only_on_index(self):
        a = replicate_rng(5, 3).integers(0, 1000, 5)
        replicate_rng(5, 0).integers(0, 1000, 5)
        np.testing.assert_array_equal(a, replicate_rng(5, 3).integers(0, 1000, 5))

    def test_too_many_undefined_replicates(self):
        from causalkit.reporting import NumericError

        def stat(v):
            if np.unique(v).size < v.size:  # any resample with a repeated unit
                raise ZeroDivisionError
            return v.mean()
        with pytest.raises(NumericError, match="undefined"):
            bootstrap(np.arange(5.0), stat, 50, seed=1)

    def test_needs_b_at_least_two(self):
        with pytest.raises(ValidationError):
            bootstrap(np.ones(5), np.mean, 1, seed=1)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalkit.design_estimators import lin_adjust, neyman_cre, stratified
from causalkit.numerics import logistic_fit, ols, with_intercept
from causalkit.propensity import (PSModel, att_components, att_estimators, balance_check, doubly_robust_ate,
                                  fit_pscore, hajek_estimate, hajek_wls, ht_estimate, ipw, overlap_weight_tau_O,
                                  ps_strata, ps_stratify, sequential_ipw, tau_o_components, truncate,
                                  weighted_estimand, wls_forms)
from causalkit.reporting import ValidationError

from conftest import make_obs


def saturated_discrete(n=600, seed=0):
    """One three-level covariate with a saturated (dummy) coding."""
    rng = np.random.default_rng(seed)
    g = np.repeat(np.arange(3), n // 3)
    e = np.array([0.3, 0.5, 0.7])[g]
    z = (rng.uniform(size=n) < e).astype(float)
    y = g + z * (1 + g) + rng.normal(size=n)
    D = (g[:, None] == np.arange(1, 3)).astype(float)
    return z, y, D, g


def dr_case(case, n, rng):
    """Data from the four (propensity, outcome) specification cases; the fitted
    models always use the linear terms only."""
    x = rng.normal(size=(n, 2))
    lin = np.column_stack([np.ones(n), x])
    nonlin = np.column_stack([lin, np.exp(x)])
    ps_ok, out_ok = case
    eta = lin @ [0, 1, 1] if ps_ok else nonlin @ [-1, 0, 0, 1, -1]
    z = rng.binomial(1, 1 / (1 + np.exp(-eta))).astype(float)
    if out_ok:
        y1 = rng.normal(lin @ [1, 2, 1])
        y0 = rng.normal(lin @ [1, 2, 1])
        truth = 0.0
    else:
        y1 = rng.normal(nonlin @ [1, 0, 0, 0.2, -0.1])
        y0 = rng.normal(nonlin @ [1, 0, 0, -0.2, 0.1])
        truth = 0.2 * np.exp(0.5)
    return z, z * y1 + (1 - z) * y0, x, truth


class TestScores:
    def test_intercept_only(self):
        z = np.array([1, 0, 0, 1, 1, 0, 0, 0.0])
        np.testing.assert_allclose(fit_pscore(None, z).scores, z.mean(), atol=1e-10)

    def test_binary_covariate_gives_frequencies(self):
        x = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1.0])
        z = np.array([1, 0, 0, 0, 1, 1, 0, 1, 0.0])
        s = fit_pscore(x, z).scores
        np.testing.assert_allclose(s[:4], 0.25, atol=1e-9)
        np.testing.assert_allclose(s[4:], 0.6, atol=1e-9)

    def test_independent_treatment(self):
        rng = np.random.default_rng(1)
        n = 4000
        z = rng.binomial(1, 0.4, n).astype(float)
        s = fit_pscore(rng.normal(size=(n, 2)), z).scores
        assert np.all(np.abs(s - z.mean()) < 3 * 0.5 / np.sqrt(n) * 3)

    def test_scores_must_be_interior(self):
        with pytest.raises(ValidationError):
            PSModel(np.array([0.2, 1.0]))

    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30))
    def test_truncation(self, s):
        s = np.array(s)
        np.testing.assert_array_equal(truncate(s), s)
        t = truncate(s, 0.1, 0.9)
        assert np.all((t >= 0.1) & (t <= 0.9))
        assert np.all(np.diff(t[np.argsort(s, kind="stable")]) >= 0)


class TestStratify:
    def test_constant_scores_fall_back(self, cre_data):
        z, y, _ = cre_data
        rep = ps_stratify(np.full(z.size, 0.5), z, y, K=5)
        ref = neyman_cre(z, y)
        assert (rep.estimate, rep.se) == (ref.estimate, ref.se)

    def test_saturated_equals_exact_strata(self):
        z, y, D, g = saturated_discrete()
        order = np.argsort(g, kind="stable")
        z, y, D, g = z[order], y[order], D[order], g[order]
        rep = ps_stratify(fit_pscore(D, z), z, y, K=3)
        assert rep.estimate == pytest.approx(stratified(z, y, g).estimate, abs=1e-12)

    def test_quantile_bins(self):
        s = np.arange(1.0, 11.0) / 11
        np.testing.assert_array_equal(np.bincount(ps_strata(s, 5)), [2] * 5)

    def test_too_many_bins(self, obs_data):
        z, y, X, _ = obs_data
        with pytest.raises(ValidationError, match="bins"):
            ps_stratify(fit_pscore(X, z), z, y, K=200)


class TestWeighting:
    def test_constant_score_equals_difference_in_means(self, cre_data):
        z, y, _ = cre_data
        e = np.full(z.size, z.mean())
        dm = neyman_cre(z, y).estimate
        assert ht_estimate(z, y, e) == pytest.approx(dm, abs=1e-12)
        assert hajek_estimate(z, y, e) == pytest.approx(dm, abs=1e-12)

    def test_shift_invariance(self, obs_data):
        z, y, _, e = obs_data
        c = 3.7
        one_t, one_c = np.mean(z / e), np.mean((1 - z) / (1 - e))
        assert ht_estimate(z, y + c, e) - ht_estimate(z, y, e) == pytest.approx(c * (one_t - one_c), abs=1e-10)
        assert hajek_estimate(z, y + c, e) - hajek_estimate(z, y, e) == pytest.approx(0, abs=1e-10)

    def test_unit_weight_means_unbiased(self):
        """mean(Z/e) and mean((1-Z)/(1-e)) average to one with true scores."""
        rng = np.random.default_rng(2)
        n, R = 200, 2000
        X = rng.normal(size=n)
        e = 1 / (1 + np.exp(-X))
        vals = np.array([[np.mean(z / e), np.mean((1 - z) / (1 - e))]
                         for z in (rng.uniform(size=(R, n)) < e).astype(float)])
        mc = vals.std(axis=0) / np.sqrt(R)
        assert np.all(np.abs(vals.mean(axis=0) - 1) < 3 * mc)

    def test_ipw_given_scores_and_bootstrap(self, obs_data):
        z, y, X, e = obs_data
        r = ipw(z, y, estimator="ht", ps=e)
        assert r.estimate == pytest.approx(ht_estimate(z, y, e)) and np.isnan(r.se)
        a = ipw(z, y, X, estimator="hajek", B=50, seed=3)
        b = ipw(z, y, X, estimator="hajek", B=50, seed=3, threads=2)
        assert a.se == b.se and a.se > 0
        assert abs(a.estimate - 1) < 4 * a.se

    def test_truncation_preset(self, obs_data):
        z, y, X, _ = obs_data
        assert ipw(z, y, X, trunc="0.1").diagnostics["trunc"] == [0.1, 0.9]
        with pytest.raises(ValidationError):
            ipw(z, y, X, trunc="0.2")


class TestDoublyRobust:
    def test_saturated_all_agree(self):
        z, y, D, _ = saturated_discrete(seed=4)
        reps = doubly_robust_ate(z, y, D)
        vals = [reps[k].estimate for k in ("reg", "ht", "hajek", "dr")]
        np.testing.assert_allclose(vals, vals[0], atol=1e-9)


class TestATT:
    def test_constant_scores(self):
        rng = np.random.default_rng(6)
        z = rng.binomial(1, 0.5, 300).astype(float)
        X = rng.normal(size=(300, 1))
        y = 2 * z + X[:, 0] + rng.normal(size=300)
        c = att_components(z, y, np.zeros((300, 0)))
        dm = y[z == 1].mean() - y[z == 0].mean()
        for k in ("reg0", "reg", "ht", "hajek", "dr"):
            assert c[k] == pytest.approx(dm, abs=1e-10)

    def test_truncation_only_upper(self, obs_data):
        z, y, X, _ = obs_data
        with pytest.raises(ValidationError):
            att_estimators(z, y, X, trunc_upper=0)
        assert att_estimators(z, y, X)["hajek"].estimate == pytest.approx(
            weighted_estimand(z, y, fit_pscore(X, z).scores, "att"), abs=1e-12)

    def test_att_equals_ate_when_uncorrelated(self):
        rng = np.random.default_rng(7)
        n, R = 2000, 100
        est = []
        for _ in range(R):
            X = rng.normal(size=(n, 2))
            e = 1 / (1 + np.exp(-X[:, 0]))
            z = (rng.uniform(size=n) < e).astype(float)
            y = X[:, 0] + z * (1 + X[:, 1]) + rng.normal(size=n)
            est.append(att_components(z, y, X)["dr"])
        assert abs(np.mean(est) - 1) < 3 * np.std(est) / np.sqrt(R)


class TestOverlap:
    def test_two_forms_and_constant_effect(self):
        z, y, X, _ = make_obs(n=3000, seed=8, tau=1.5)
        a, b = tau_o_components(z, y, X), tau_o_components(z, y, X, "covariates")
        assert a == pytest.approx(1.5, abs=0.15)
        e = fit_pscore(X, z).scores
        fit = ols(np.column_stack([np.ones(z.size), z, e, X]), y)
        assert b == pytest.approx(fit.coefficients[1], abs=1e-9)
        assert overlap_weight_tau_O(z, y, X, form="covariates").estimate == pytest.approx(b)

    def test_half_scores_give_difference_in_means(self):
        z = np.array([1, 0, 1, 0, 1, 0, 1, 0.0])
        y = np.array([3, 1, 4, 1, 5, 9, 2, 6.0])
        X = np.array([0, 0, 1, 1, 2, 2, 3, 3.0])
        a = tau_o_components(z, y, X)
        assert a == pytest.approx(neyman_cre(z, y).estimate, abs=1e-8)


class TestHajekWLS:
    def test_no_covariates_equals_hajek(self, obs_data):
        z, y, X, _ = obs_data
        e = fit_pscore(X, z).scores
        assert hajek_wls(z, y, X, adjust=False).estimate == pytest.approx(hajek_estimate(z, y, e), abs=1e-10)

    @pytest.mark.parametrize("target", ["ate", "att"])
    def test_coef_equals_dr(self, obs_data, target):
        z, y, X, _ = obs_data
        f = wls_forms(z, y, X, fit_pscore(X, z).scores, target)
        assert f["coef"] == pytest.approx(f["dr"], abs=1e-10)

    def test_unit_weights_equal_lin(self, cre_data):
        z, y, X = cre_data
        f = wls_forms(z, y, X, np.full(z.size, 0.5), "ate")
        assert f["coef"] == pytest.approx(lin_adjust(z, y, X).estimate, abs=1e-10)


class TestWeightedEstimands:
    def test_saturated_att_atc(self):
        z, y, D, g = saturated_discrete(seed=9)
        e = fit_pscore(D, z).scores
        cells = [(y[(g == k) & (z == 1)].mean() - y[(g == k) & (z == 0)].mean()) for k in range(3)]
        n1k = np.array([z[g == k].sum() for k in range(3)])
        n0k = np.array([(1 - z[g == k]).sum() for k in range(3)])
        assert weighted_estimand(z, y, e, "att") == pytest.approx(n1k @ cells / n1k.sum(), abs=1e-9)
        assert weighted_estimand(z, y, e, "atc") == pytest.approx(n0k @ cells / n0k.sum(), abs=1e-9)


class TestBalance:
    def test_empty(self, cre_data):
        z, _, _ = cre_data
        assert len(balance_check(np.full(z.size, 0.5), z, np.zeros((z.size, 0)))) == 0

    def test_confounded_unweighted_flags(self):
        z, _, X, e = make_obs(n=1000, seed=10)
        assert "x0" in balance_check(None, z, X, method="unweighted").imbalanced()
        assert balance_check(e, z, X, method="hajek").imbalanced() == []
        assert len(balance_check(e, z, X, method="stratified", names=["a", "b"])) == 2

    def test_randomized_coverage(self):
        rng = np.random.default_rng(11)
        cover = 0
        for _ in range(200):
            z = rng.binomial(1, 0.5, 200).astype(float)
            X = rng.normal(size=(200, 1))
            cover += not balance_check(np.full(200, 0.5), z, X, method="hajek").imbalanced()
        assert 0.9 <= cover / 200 <= 0.99


class TestSequential:
    def test_randomized_equals_cell_mean(self):
        rng = np.random.default_rng(12)
        n = 400
        z1 = rng.binomial(1, 0.5, n).astype(float)
        z2 = rng.binomial(1, 0.3, n).astype(float)
        y = z1 + 2 * z2 + rng.normal(size=n)
        r = sequential_ipw(z1, z2, y, target=(1, 1))
        assert r.estimate == pytest.approx(y[(z1 == 1) & (z2 == 1)].mean(), abs=1e-10)

    def test_three_periods_rejected(self):
        with pytest.raises(ValidationError, match="two"):
            sequential_ipw([np.ones(4), np.zeros(4), np.ones(4)], np.ones(4), np.ones(4))

    def test_linear_simulation(self):
        rng = np.random.default_rng(13)
        n, R = 1000, 500
        est = []
        for _ in range(R):
            x0 = rng.normal(size=n)
            z1 = (rng.uniform(size=n) < 1 / (1 + np.exp(-x0))).astype(float)
            x1 = 0.5 * x0 + z1 + rng.normal(size=n)
            z2 = (rng.uniform(size=n) < 1 / (1 + np.exp(-(0.5 * x1 - 0.3 * z1)))).astype(float)
            y = x0 + x1 + z1 + 2 * z2 + rng.normal(size=n)
            est.append(sequential_ipw(z1, z2, y, x0, x1, target=(1, 1), contrast=(0, 0)).estimate)
        # E Y(1,1) - E Y(0,0) = z1 (direct 1 + via x1 1) + 2 z2 = 4
        assert abs(np.mean(est) - 4) < 3 * np.std(est) / np.sqrt(R)

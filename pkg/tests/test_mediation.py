import numpy as np
import pytest

from causalkit.mediation import (CROSS_WORLD_CAVEAT, baron_kenny, bk_components, cde_components,
                                 cde_estimators, formula_components, mediation_formula_binary_m,
                                 principal_score_weighting)
from causalkit.propensity import ate_components
from causalkit.reporting import ValidationError

from conftest import make_mediation


def discrete_mediation(n=4000, seed=0):
    """Binary X, binary Z, binary M with cell-specific outcome means."""
    rng = np.random.default_rng(seed)
    x = rng.binomial(1, 0.4, n).astype(float)
    z = rng.binomial(1, 0.3 + 0.3 * x).astype(float)
    m = rng.binomial(1, 0.2 + 0.4 * z + 0.2 * x).astype(float)
    y = 1 + z + 2 * m + 1.5 * x + z * m * (1 + x) + rng.normal(size=n)
    return z, m, y, x


class TestBaronKenny:
    def test_difference_equals_product(self):
        z, m, y, X = make_mediation(seed=1)
        c = bk_components(z, m, y, X)
        assert c["alpha1"] - c["theta1"] == pytest.approx(c["theta2"] * c["beta1"], abs=1e-12)
        r = baron_kenny(z, m, y, X)
        assert r.nde.estimate + r.nie.estimate == pytest.approx(r.total, abs=1e-9)
        assert r.caveat == CROSS_WORLD_CAVEAT

    def test_sobel_variance(self):
        from causalkit.numerics import ols, robust_cov
        z, m, y, X = make_mediation(seed=2)
        r = baron_kenny(z, m, y, X)
        c = bk_components(z, m, y, X)
        vm = robust_cov(c["med_fit"], "HC3").matrix[1, 1]
        vo = robust_cov(c["out_fit"], "HC3").matrix[2, 2]
        assert r.nie.se**2 == pytest.approx(c["theta2"] ** 2 * vm + c["beta1"] ** 2 * vo)
        assert r.nde.se**2 == pytest.approx(robust_cov(c["out_fit"], "HC3").matrix[1, 1])

    def test_independent_mediator(self):
        rng = np.random.default_rng(3)
        n = 1000
        z = rng.binomial(1, 0.5, n).astype(float)
        m = rng.normal(size=n)
        y = z + m + rng.normal(size=n)
        r = baron_kenny(z, m, y)
        assert abs(r.nie.estimate) < 3 * r.nie.se

    def test_outcome_free_of_mediator(self):
        rng = np.random.default_rng(4)
        n = 5000
        z = rng.binomial(1, 0.5, n).astype(float)
        m = z + rng.normal(size=n)
        y = 2 * z + 0.01 * rng.normal(size=n)
        assert baron_kenny(z, m, y).nie.estimate == pytest.approx(0, abs=1e-3)

    def test_interaction_formulas(self):
        z, m, y, X = make_mediation(seed=5)
        c = bk_components(z, m, y, X, interaction=True)
        from causalkit.numerics import ols
        n = z.size
        b = ols(np.column_stack([np.ones(n), z, X]), m).coefficients
        t = ols(np.column_stack([np.ones(n), z, m, z * m, X]), y).coefficients
        assert c["nde"] == pytest.approx(t[1] + t[3] * (b[0] + b[2:] @ X.mean(axis=0)))
        assert c["nie"] == pytest.approx((t[2] + t[3]) * b[1])
        r = baron_kenny(z, m, y, X, interaction=True, B=40, seed=1)
        assert r.nie.se > 0 and r.diagnostics["bootstrap_B"] == 40


class TestMediationFormula:
    def test_saturated_brute_force(self):
        z, m, y, x = discrete_mediation(seed=6)
        nde = nie = 0.0
        for xv in (0, 1):
            px = np.mean(x == xv)
            mu = {(a, b): y[(z == a) & (m == b) & (x == xv)].mean() for a in (0, 1) for b in (0, 1)}
            p = {a: m[(z == a) & (x == xv)].mean() for a in (0, 1)}
            nde += px * sum((mu[1, b] - mu[0, b]) * (p[0] if b else 1 - p[0]) for b in (0, 1))
            nie += px * (p[1] - p[0]) * (mu[1, 1] - mu[1, 0])
        assert formula_components(z, m, y, x[:, None]) == pytest.approx((nde, nie), abs=1e-9)

    def test_linear_truth_agrees_with_bk(self):
        z, m, y, X = make_mediation(n=3000, seed=7)
        f = mediation_formula_binary_m(z, m, y, X, B=100, seed=2)
        b = baron_kenny(z, m, y, X)
        assert abs(f.nde.estimate - b.nde.estimate) < 3 * f.nde.se
        assert abs(f.nie.estimate - b.nie.estimate) < 3 * f.nie.se

    def test_no_effects(self):
        rng = np.random.default_rng(8)
        n = 4000
        X = rng.normal(size=(n, 1))
        z = rng.binomial(1, 0.5, n).astype(float)
        m = rng.binomial(1, 1 / (1 + np.exp(-X[:, 0]))).astype(float)
        y = X[:, 0] + m + rng.normal(size=n)
        f = mediation_formula_binary_m(z, m, y, X, B=100, seed=3)
        assert abs(f.nde.estimate) < 3 * f.nde.se and abs(f.nie.estimate) < 3 * f.nie.se

    def test_binary_mediator_required(self):
        z, m, y, X = make_mediation(seed=9)
        with pytest.raises(ValidationError):
            mediation_formula_binary_m(z, m + 0.5, y, X)


class TestPrincipalScore:
    def one_sided(self, n=2000, seed=10):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 1))
        z = rng.binomial(1, 0.5, n).astype(float)
        complier = rng.uniform(size=n) < 1 / (1 + np.exp(-X[:, 0]))
        m = z * complier
        y = X[:, 0] + z * np.where(complier, 1.0, -0.5) + rng.normal(size=n)
        return z, m.astype(float), y, X

    def test_recovers_strata_effects(self):
        z, m, y, X = self.one_sided()
        r = principal_score_weighting(z, m, y, X, B=100, seed=4)
        assert abs(r["tau_10"].estimate - 1.0) < 3 * r["tau_10"].se
        assert abs(r["tau_00"].estimate + 0.5) < 3 * r["tau_00"].se

    def test_constant_score(self):
        z, m, y, _ = self.one_sided(seed=11)
        r = principal_score_weighting(z, m, y)
        assert r["tau_10"].estimate == pytest.approx(y[(z == 1) & (m == 1)].mean() - y[z == 0].mean())

    def test_all_compliers(self):
        z, _, y, X = self.one_sided(seed=12)
        with pytest.raises(ValidationError):
            principal_score_weighting(z, z.copy(), y, X)

    def test_strong_monotonicity_required(self):
        z, m, y, X = self.one_sided(seed=13)
        m[np.flatnonzero(z == 0)[0]] = 1
        with pytest.raises(ValidationError, match="monotonicity"):
            principal_score_weighting(z, m, y, X)


class TestCDE:
    def test_constant_mediator_reduces_to_ate(self, obs_data):
        z, y, X, _ = obs_data
        c = cde_components(z, np.ones(z.size), y, X, 1)
        a = ate_components(z, y, X)
        for k in ("reg", "ht", "hajek", "dr"):
            assert c[k] == pytest.approx(a[k], abs=1e-10)

    @pytest.mark.parametrize("level", [0, 1])
    def test_saturated_four_paths(self, level):
        z, m, y, x = discrete_mediation(seed=14)
        c = cde_components(z, m, y, x[:, None], level)
        vals = [c[k] for k in ("reg", "ht", "hajek", "dr")]
        np.testing.assert_allclose(vals, vals[0], atol=1e-10)

    def test_linear_truth(self):
        z, m, y, X = make_mediation(n=3000, seed=15)
        for level in (0, 1):
            r = cde_estimators(z, m, y, X, m_level=level, B=100, seed=5)
            assert abs(r.estimate - 0.5) < 3 * r.se

    def test_hajek_location_invariant(self):
        z, m, y, X = make_mediation(seed=16)
        a = cde_components(z, m, y, X, 1)["hajek"]
        assert cde_components(z, m, y + 100, X, 1)["hajek"] == pytest.approx(a, abs=1e-9)

    def test_empty_cell(self):
        z, m, y, X = make_mediation(seed=17)
        with pytest.raises(ValidationError):
            cde_estimators(z, m, y, X, m_level=2)
        with pytest.raises(ValidationError):
            cde_estimators(z, m, y, X, estimator="ipw")

"""Instrumental variables: Wald/CACE estimation, binary mixture decomposition
and IV inequalities, two-stage least squares, Fieller-Anderson-Rubin sets and
Mendelian randomization summary-statistic estimators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .design_estimators import lin_adjust, neyman_cre
from .numerics import bootstrap, ols, robust_cov, wls
from .reporting import (
    EstimateReport,
    ValidationError,
    WeakInstrumentError,
    as_binary,
    as_matrix,
    parallel_map,
    two_sided_normal_p,
)

WEAK_TOL = 1e-8


def _dm(z, v):
    return float(v[z == 1].mean() - v[z == 0].mean())


def wald(z, d, y, se_method: str = "delta", alpha: float = 0.05, B: int = 200, seed=None,
         threads=None) -> EstimateReport:
    """Ratio of the intention-to-treat effects on Y and on D.

    The delta SE is the Neyman SE of the adjusted outcome Y - tau_c D divided
    by |tau_D|.
    """
    z = as_binary(z, "instrument")
    d = np.asarray(d, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if not (d.size == y.size == z.size):
        raise ValidationError("instrument, treatment and outcome lengths differ")
    tau_d, tau_y = _dm(z, d), _dm(z, y)
    if abs(tau_d) < WEAK_TOL:
        raise WeakInstrumentError("the instrument has no effect on the treatment; "
                                  "use the FAR confidence set instead")
    est = tau_y / tau_d
    diag = {"tau_D": tau_d, "tau_Y": tau_y}
    if se_method == "delta":
        a = y - est * d
        se = neyman_cre(z, a).se / abs(tau_d)
    elif se_method == "bootstrap":
        if seed is None:
            raise ValidationError("bootstrap SE needs a seed")

        def stat(s):
            td = _dm(s[0], s[1])
            if abs(td) < WEAK_TOL:
                raise WeakInstrumentError("zero first stage")
            return _dm(s[0], s[2]) / td
        se = bootstrap([z, d, y], stat, B, seed, threads).se
        diag["bootstrap_B"] = B
    else:
        raise ValidationError("se_method must be 'delta' or 'bootstrap'")
    return EstimateReport.wald("CACE", est, se, alpha, method=f"wald_{se_method}", n=z.size,
                               diagnostics=diag)


def wald_adjusted(z, d, y, X=None, alpha: float = 0.05, B: int = 200, seed=None,
                  threads=None) -> EstimateReport:
    """Ratio of covariate-adjusted (Lin) effects on Y and on D with a bootstrap SE."""
    z = as_binary(z, "instrument")
    X = as_matrix(X, z.size)
    d = np.asarray(d, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[1] == 0:
        if seed is None:
            return wald(z, d, y, "delta", alpha)
        return wald(z, d, y, "bootstrap", alpha, B, seed, threads)

    def stat(s):
        td = lin_adjust(s[0], s[1], s[3]).estimate
        if abs(td) < WEAK_TOL:
            raise WeakInstrumentError("zero first stage")
        return lin_adjust(s[0], s[2], s[3]).estimate / td
    data = [z, d, y, X]
    est = stat(data)
    se = float("nan")
    diag = {}
    if seed is not None:
        se = bootstrap(data, stat, B, seed, threads).se
        diag["bootstrap_B"] = B
    return EstimateReport.wald("CACE", est, se, alpha, method="wald_lin", n=z.size, diagnostics=diag)


# ---- binary instrument, treatment and outcome --------------------------------

@dataclass
class IvBinarySummary:
    pi_c: float
    pi_n: float
    pi_a: float
    mu_c1: float
    mu_c0: float
    mu_n: float
    mu_a: float
    tau_c: float
    violations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _counts(counts):
    c = [float(v) for v in counts]
    if len(c) != 8 or min(c) < 0:
        raise ValidationError("need eight nonnegative counts n111 n110 n101 n100 n011 n010 n001 n000")
    return c


def binary_iv_decompose(counts) -> IvBinarySummary:
    """Compliance-type proportions and type-specific outcome means from the
    eight counts n_{zdy} in the order (111, 110, 101, 100, 011, 010, 001, 000)."""
    n111, n110, n101, n100, n011, n010, n001, n000 = _counts(counts)
    n_tr = n111 + n110 + n101 + n100
    n_co = n011 + n010 + n001 + n000
    if n_tr == 0 or n_co == 0:
        raise ValidationError("both instrument arms need units")
    pi_n = (n101 + n100) / n_tr
    pi_a = (n011 + n010) / n_co
    pi_c = 1 - pi_n - pi_a
    if pi_c < 0:
        warnings.warn("pr(D=1|Z=1) < pr(D=1|Z=0): the data contradict monotonicity", stacklevel=2)
    if pi_c == 0:
        raise WeakInstrumentError("no compliers: the instrument does not move the treatment")

    def mean(a, b):
        return a / (a + b) if a + b > 0 else float("nan")
    y11, y10, y01, y00 = mean(n111, n110), mean(n101, n100), mean(n011, n010), mean(n001, n000)
    mu_n = y10 if pi_n > 0 else 0.0
    mu_a = y01 if pi_a > 0 else 0.0
    mu_c1 = ((pi_c + pi_a) * y11 - pi_a * mu_a) / pi_c
    mu_c0 = ((pi_c + pi_n) * y00 - pi_n * mu_n) / pi_c
    viol = [name for name, v in (("mu_c1", mu_c1), ("mu_c0", mu_c0)) if not 0 <= v <= 1]
    return IvBinarySummary(pi_c, pi_n, pi_a, mu_c1, mu_c0, mu_n, mu_a, mu_c1 - mu_c0, viol)


@dataclass
class IvInequality:
    q: str
    estimate: float
    holds: bool


def iv_inequalities(counts) -> list:
    """E(Q|Z=1) - E(Q|Z=0) for Q = DY, D(1-Y), (D-1)Y and D+Y-DY; each must
    be nonnegative under the IV assumptions with a binary outcome."""
    n111, n110, n101, n100, n011, n010, n001, n000 = _counts(counts)
    cells = {1: {(1, 1): n111, (1, 0): n110, (0, 1): n101, (0, 0): n100},
             0: {(1, 1): n011, (1, 0): n010, (0, 1): n001, (0, 0): n000}}
    qs = {"DY": lambda d, y: d * y, "D(1-Y)": lambda d, y: d * (1 - y),
          "(D-1)Y": lambda d, y: (d - 1) * y, "D+Y-DY": lambda d, y: d + y - d * y}
    out = []
    for name, f in qs.items():
        m = []
        for zv in (1, 0):
            tot = sum(cells[zv].values())
            if tot == 0:
                raise ValidationError("both instrument arms need units")
            m.append(sum(cnt * f(dv, yv) for (dv, yv), cnt in cells[zv].items()) / tot)
        est = m[0] - m[1]
        out.append(IvInequality(name, float(est), bool(est >= -1e-12)))
    return out


# ---- linear instrumental variable models -------------------------------------

def _cols(a, n, name):
    a = as_matrix(a, n)
    if a.shape[0] != n:
        raise ValidationError(f"{name} has the wrong number of rows")
    return a


def tsls(y, D, Zi, X=None, alpha: float = 0.05, hc: str = "HC0") -> list:
    """Two-stage least squares of y on (1, D, X) with instruments (1, Zi, X).

    The sandwich uses residuals y - (1, D, X) beta rather than the second-stage
    residuals. Returns one EstimateReport per endogenous column.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    D = _cols(D, n, "treatment")
    Zi = _cols(Zi, n, "instrument")
    X = _cols(X, n, "covariates")
    k, m = D.shape[1], Zi.shape[1]
    if m < k:
        raise ValidationError(f"under-identified: {m} instruments for {k} endogenous regressors")
    one = np.ones((n, 1))
    Zfull = np.hstack([one, Zi, X])
    Dhat = np.column_stack([ols(Zfull, D[:, j]).fitted for j in range(k)])
    diag = {}
    for j in range(k):
        restricted = ols(np.hstack([one, X]), D[:, j])
        full = ols(Zfull, D[:, j])
        rss_r, rss_f = np.sum(restricted.residuals**2), np.sum(full.residuals**2)
        dof = n - Zfull.shape[1]
        F = ((rss_r - rss_f) / m) / (rss_f / dof) if rss_f > 0 and dof > 0 else np.inf
        diag[f"first_stage_F_{j}"] = float(F)
        if F < 1e-6 * max(1.0, n):
            warnings.warn(f"instruments barely predict endogenous column {j} (F={F:.3g}); "
                          "consider the FAR confidence set", stacklevel=2)
    second = ols(np.hstack([one, Dhat, X]), y)
    beta = second.coefficients
    resid = y - np.hstack([one, D, X]) @ beta
    V = robust_cov(second, hc, residuals=resid).matrix
    reports = []
    for j in range(k):
        reports.append(EstimateReport.wald(f"beta_D{j}", beta[1 + j], np.sqrt(V[1 + j, 1 + j]), alpha,
                                           method="tsls", n=n, diagnostics=dict(diag, hc=hc)))
    return reports


def iv_direct(y, D, Zi, X=None) -> np.ndarray:
    """Just-identified IV coefficients (sum Z D')^{-1} sum Z y with (1, X)
    acting as their own instruments; order (1, D, X)."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    D, Zi, X = _cols(D, n, "treatment"), _cols(Zi, n, "instrument"), _cols(X, n, "covariates")
    if Zi.shape[1] != D.shape[1]:
        raise ValidationError("direct IV formula needs as many instruments as treatments")
    one = np.ones((n, 1))
    Zf, Df = np.hstack([one, Zi, X]), np.hstack([one, D, X])
    return np.linalg.solve(Zf.T @ Df, Zf.T @ y)


def control_function(y, D, Zi, X=None) -> np.ndarray:
    """Coefficients of D in OLS of y on (1, D, X, first-stage residuals)."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    D, Zi, X = _cols(D, n, "treatment"), _cols(Zi, n, "instrument"), _cols(X, n, "covariates")
    one = np.ones((n, 1))
    Zfull = np.hstack([one, Zi, X])
    res = np.column_stack([ols(Zfull, D[:, j]).residuals for j in range(D.shape[1])])
    fit = ols(np.hstack([one, D, X, res]), y)
    return fit.coefficients[1:1 + D.shape[1]]


def ils(y, d, z, X=None, alpha: float = 0.05, hc: str = "HC0") -> EstimateReport:
    """Indirect least squares: ratio of the reduced-form coefficients of z in
    the regressions of y and of d on (1, z, X); SE from the TSLS sandwich."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    d = np.asarray(d, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    X = _cols(X, n, "covariates")
    W = np.column_stack([np.ones(n), z, X])
    gamma1 = ols(W, d).coefficients[1]
    Gamma1 = ols(W, y).coefficients[1]
    if abs(gamma1) < WEAK_TOL * max(1.0, np.std(d)):
        raise WeakInstrumentError("the instrument does not predict the treatment")
    est = Gamma1 / gamma1
    rep = tsls(y, d, z, X, alpha, hc)[0]
    return EstimateReport.wald("beta_D", est, rep.se, alpha, method="ils", n=n,
                               diagnostics={"gamma1": float(gamma1), "Gamma1": float(Gamma1)})


# ---- Fieller-Anderson-Rubin sets ---------------------------------------------

@dataclass
class FarSet:
    grid: np.ndarray
    p_values: np.ndarray
    intervals: list
    shape: str
    point: float
    alpha: float

    def as_dict(self) -> dict:
        return {"point": self.point, "intervals": [list(iv) for iv in self.intervals],
                "shape": self.shape, "alpha": self.alpha}


def _far_p(b, z, d, y, X, mode, hc):
    a = y - b * d
    if mode == "cre":
        rep = neyman_cre(z, a)
        t = rep.estimate / rep.se
    elif mode == "cre_covariates":
        rep = lin_adjust(z, a, X, population="super", hc=hc)
        t = rep.estimate / rep.se
    else:
        fit = ols(np.column_stack([np.ones(z.size), z, X]), a)
        t = fit.coefficients[1] / robust_cov(fit, hc).se()[1]
    return two_sided_normal_p(t)


def far_confidence_set(z, d, y, X=None, grid=None, alpha: float = 0.05, mode: str = "cre",
                       hc: str = "HC3", threads=None) -> FarSet:
    """Invert tests of zero effect on A(b) = y - b d over a grid of b.

    mode ``cre``: difference in means with the Neyman SE; ``cre_covariates``:
    Lin's estimator with the super-population SE; ``linear_iv``: t statistic of
    z in the OLS of A(b) on (1, z, X). The default grid is the Wald estimate
    plus or minus 10 delta SEs at 401 points.
    """
    z = np.asarray(z, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    X = as_matrix(X, z.size)
    if mode not in ("cre", "cre_covariates", "linear_iv"):
        raise ValidationError("mode must be cre, cre_covariates or linear_iv")
    if mode != "linear_iv":
        as_binary(z, "instrument")
    if grid is None:
        if mode == "linear_iv":
            r = tsls(y, d, z, X)[0]
        else:
            r = wald(z, d, y)
        grid = np.linspace(r.estimate - 10 * r.se, r.estimate + 10 * r.se, 401)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("FAR grid is empty")
    pv = np.array(parallel_map(lambda b: _far_p(b, z, d, y, X, mode, hc), list(grid), threads))
    inside = pv >= alpha
    intervals = []
    i = 0
    while i < grid.size:
        if inside[i]:
            j = i
            while j + 1 < grid.size and inside[j + 1]:
                j += 1
            intervals.append((float(grid[i]), float(grid[j])))
            i = j + 1
        else:
            i += 1
    if not intervals:
        shape = "empty"
    elif len(intervals) == 1 and inside[0] and inside[-1]:
        shape = "whole_line"
    elif len(intervals) == 1 and not inside[0] and not inside[-1]:
        shape = "interval"
    elif len(intervals) == 2 and inside[0] and inside[-1]:
        shape = "two_intervals"
    else:
        shape = "unbounded_or_irregular"
    return FarSet(grid, pv, intervals, shape, float(grid[np.argmax(pv)]), alpha)


# ---- Mendelian randomization -------------------------------------------------

def _mr_inputs(*arrs):
    out = [np.asarray(a, dtype=float).ravel() for a in arrs]
    if len({a.size for a in out}) != 1:
        raise ValidationError("summary statistic vectors must have equal length")
    return out


def mr_fixed_effect(gamma, se_d, Gamma, se_y, variant: str = "full",
                    alpha: float = 0.05) -> EstimateReport:
    """Inverse-variance (Fisher) weighting of the ratio estimates Gamma_j / gamma_j."""
    gamma, se_d, Gamma, se_y = _mr_inputs(gamma, se_d, Gamma, se_y)
    if np.any(se_y <= 0) or np.any(se_d < 0):
        raise ValidationError("standard errors must be positive")
    if np.any(gamma == 0):
        raise ValidationError("every exposure coefficient must be nonzero")
    ratio = Gamma / gamma
    if variant == "full":
        w = gamma**2 / (se_y**2 + ratio**2 * se_d**2)
    elif variant == "outcome_se_only":
        w = gamma**2 / se_y**2
    else:
        raise ValidationError("variant must be 'full' or 'outcome_se_only'")
    est = np.sum(ratio * w) / np.sum(w)
    return EstimateReport.wald("beta", est, 1 / np.sqrt(np.sum(w)), alpha, method=f"mr_fe_{variant}",
                               n=gamma.size)


def mr_egger(gamma, Gamma, weights=None, se_y=None, intercept: bool = True,
             alpha: float = 0.05) -> dict:
    """Weighted regression of Gamma_j on gamma_j (optionally with an intercept)
    with the usual model-based SEs; default weights 1/se_y^2."""
    gamma, Gamma = _mr_inputs(gamma, Gamma)
    if weights is None:
        if se_y is None:
            raise ValidationError("give weights or outcome standard errors")
        weights = 1 / np.asarray(se_y, dtype=float) ** 2
    w = np.asarray(weights, dtype=float).ravel()
    if intercept and gamma.size < 2:
        raise ValidationError("the intercept model needs at least 2 instruments")
    Xd = np.column_stack([np.ones(gamma.size), gamma]) if intercept else gamma[:, None]
    fit = wls(Xd, Gamma, w)
    se = np.sqrt(np.diag(fit.model_cov))
    out = {"slope": EstimateReport.wald("beta", fit.coefficients[-1], se[-1], alpha,
                                        method="mr_egger", n=gamma.size)}
    if intercept:
        out["intercept"] = EstimateReport.wald("alpha", fit.coefficients[0], se[0], alpha,
                                               method="mr_egger", n=gamma.size)
    return out

"""Mediation and principal stratification: Baron-Kenny with Sobel SEs, the
mediation formula for a binary mediator, principal-score weighting and
controlled direct effects."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import bootstrap, logistic_fit, ols, robust_cov, with_intercept
from .reporting import EstimateReport, ValidationError, as_binary, as_matrix

CROSS_WORLD_CAVEAT = ("natural effects assume no unmeasured confounding of Z-M, Z-Y and M-Y and "
                      "cross-world independence of the potential mediators and outcomes, which no "
                      "data can check")


@dataclass
class MediationReport:
    nde: EstimateReport
    nie: EstimateReport
    total: float | None = None
    diagnostics: dict = field(default_factory=dict)
    caveat: str = CROSS_WORLD_CAVEAT

    def as_dict(self) -> dict:
        out = {"nde": self.nde.as_dict(), "nie": self.nie.as_dict(), "caveat": self.caveat}
        if self.total is not None:
            out["total"] = self.total
        out["diagnostics"] = self.diagnostics
        return out


def _prep(z, m, y, X):
    z = as_binary(z)
    m = np.asarray(m, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if not (m.size == y.size == z.size):
        raise ValidationError("treatment, mediator and outcome lengths differ")
    return z, m, y, as_matrix(X, z.size)


def bk_components(z, m, y, X, interaction: bool = False) -> dict:
    """Coefficients of the mediator and outcome regressions plus the
    total-effect coefficient of Z in y ~ (1, Z, X)."""
    n = z.size
    one = np.ones(n)
    med = ols(np.column_stack([one, z, X]), m)
    cols = [one, z, m] + ([z * m] if interaction else []) + [X]
    out = ols(np.column_stack(cols), y)
    tot = ols(np.column_stack([one, z, X]), y)
    b, t = med.coefficients, out.coefficients
    res = {"beta1": b[1], "theta1": t[1], "theta2": t[2], "alpha1": tot.coefficients[1],
           "med_fit": med, "out_fit": out}
    if interaction:
        theta3 = t[3]
        xbar = X.mean(axis=0)
        res["nde"] = t[1] + theta3 * (b[0] + b[2:] @ xbar)
        res["nie"] = (t[2] + theta3) * b[1]
    else:
        res["nde"] = t[1]
        res["nie"] = t[2] * b[1]
    return res


def baron_kenny(z, m, y, X=None, alpha: float = 0.05, hc: str = "HC3", interaction: bool = False,
                B: int = 200, seed=None, threads=None) -> MediationReport:
    """NDE = coefficient of Z in y ~ (Z, M, X); NIE = product of the Z
    coefficient in m ~ (Z, X) and the M coefficient in the outcome model.

    SEs: robust SE for NDE and Sobel's delta-method SE for NIE. With
    ``interaction`` a Z*M term is added and SEs come from the bootstrap.
    """
    z, m, y, X = _prep(z, m, y, X)
    c = bk_components(z, m, y, X, interaction)
    diag = {"hc": hc, "interaction": interaction}
    if not interaction:
        vm = robust_cov(c["med_fit"], hc).matrix
        vo = robust_cov(c["out_fit"], hc).matrix
        se_nde = np.sqrt(vo[1, 1])
        se_nie = np.sqrt(vo[2, 2] * c["beta1"] ** 2 + c["theta2"] ** 2 * vm[1, 1])
    elif seed is not None:
        boot = bootstrap([z, m, y, X], lambda d: [v for k, v in bk_components(*d, True).items()
                                                   if k in ("nde", "nie")], B, seed, threads)
        se_nde, se_nie = boot.se
        diag["bootstrap_B"] = B
    else:
        se_nde = se_nie = float("nan")
    n = z.size
    return MediationReport(
        EstimateReport.wald("NDE", c["nde"], se_nde, alpha, method="baron_kenny", n=n),
        EstimateReport.wald("NIE", c["nie"], se_nie, alpha, method="baron_kenny" if not interaction
                            else "baron_kenny_interaction", n=n),
        total=float(c["alpha1"]), diagnostics=diag)


def _check_binary_m(m):
    if not np.all((m == 0) | (m == 1)):
        raise ValidationError("the mediator must be binary 0/1")


def formula_components(z, m, y, X) -> tuple:
    """(NDE, NIE) from the mediation formula with a binary mediator, averaged
    over the empirical covariate distribution."""
    X1 = with_intercept(X)
    mu = {}
    for zv in (0, 1):
        for mv in (0, 1):
            sel = (z == zv) & (m == mv)
            if sel.sum() < X1.shape[1]:
                raise ValidationError(f"cell (z={zv}, m={mv}) has too few units for the outcome model")
            mu[zv, mv] = X1 @ ols(X1[sel], y[sel]).coefficients
    p = {}
    for zv in (0, 1):
        sel = z == zv
        mz = m[sel]
        if mz.min() == mz.max():
            p[zv] = np.full(z.size, float(mz[0]))
        else:
            p[zv] = logistic_fit(X1[sel], mz).predict(X1)
    nde_x = (mu[1, 1] - mu[0, 1]) * p[0] + (mu[1, 0] - mu[0, 0]) * (1 - p[0])
    nie_x = (p[1] - p[0]) * (mu[1, 1] - mu[1, 0])
    return float(nde_x.mean()), float(nie_x.mean())


def mediation_formula_binary_m(z, m, y, X=None, alpha: float = 0.05, B: int = 200, seed=None,
                               threads=None) -> MediationReport:
    """Natural direct and indirect effects for a binary mediator with linear
    outcome models per (z, m) cell and logistic mediator models per arm."""
    z, m, y, X = _prep(z, m, y, X)
    _check_binary_m(m)
    nde, nie = formula_components(z, m, y, X)
    se = (float("nan"), float("nan"))
    diag = {}
    if seed is not None:
        boot = bootstrap([z, m, y, X], lambda d: list(formula_components(*d)), B, seed, threads)
        se = tuple(boot.se)
        diag["bootstrap_B"] = B
    n = z.size
    return MediationReport(EstimateReport.wald("NDE", nde, se[0], alpha, method="mediation_formula", n=n),
                           EstimateReport.wald("NIE", nie, se[1], alpha, method="mediation_formula", n=n),
                           total=nde + nie, diagnostics=diag)


def psw_components(z, m, y, X) -> tuple:
    """(tau(1,0), tau(0,0)) by principal-score weighting under M(0) = 0."""
    X1 = with_intercept(X)
    t = z == 1
    pi10 = m[t].mean()
    pi00 = 1 - pi10
    if pi10 <= 0 or pi00 <= 0:
        raise ValidationError("both principal strata need treated units (0 < pr(M=1|Z=1) < 1)")
    ps10 = logistic_fit(X1[t], m[t]).predict(X1)
    c = ~t
    tau10 = y[t & (m == 1)].mean() - np.mean(y[c] * ps10[c]) / pi10
    tau00 = y[t & (m == 0)].mean() - np.mean(y[c] * (1 - ps10[c])) / pi00
    return float(tau10), float(tau00)


def principal_score_weighting(z, m, y, X=None, alpha: float = 0.05, B: int = 500, seed=None,
                              threads=None) -> dict:
    """Effects among compliers tau(1,0) and never-takers tau(0,0) under strong
    monotonicity and principal ignorability, with bootstrap SEs."""
    z, m, y, X = _prep(z, m, y, X)
    _check_binary_m(m)
    if np.any((z == 0) & (m == 1)):
        raise ValidationError("units with Z=0 and M=1 exist; principal-score weighting here "
                              "requires strong monotonicity M(0) = 0")
    t10, t00 = psw_components(z, m, y, X)
    se = (float("nan"), float("nan"))
    diag = {}
    if seed is not None:
        boot = bootstrap([z, m, y, X], lambda d: list(psw_components(*d)), B, seed, threads)
        se = tuple(boot.se)
        diag["bootstrap_B"] = B
    n = z.size
    return {"tau_10": EstimateReport.wald("tau(1,0)", t10, se[0], alpha, method="psw", n=n, diagnostics=diag),
            "tau_00": EstimateReport.wald("tau(0,0)", t00, se[1], alpha, method="psw", n=n, diagnostics=diag)}


def cde_components(z, m, y, X, m_level) -> dict:
    """reg, HT, Hajek and DR estimates of the controlled direct effect at m_level."""
    X1 = with_intercept(X)
    ez = logistic_fit(X1, z).fitted_probabilities
    mu, ind, e = {}, {}, {}
    for zv in (0, 1):
        arm = z == zv
        if m[arm].min() == m[arm].max():
            pm = np.full(z.size, 1.0 if m[arm][0] == m_level else 0.0)
        else:
            p1 = logistic_fit(X1[arm], (m[arm] == m_level).astype(float)).predict(X1)
            pm = p1
        e[zv] = (ez if zv == 1 else 1 - ez) * pm
        ind[zv] = ((z == zv) & (m == m_level)).astype(float)
        sel = ind[zv] == 1
        if sel.sum() < X1.shape[1]:
            raise ValidationError(f"cell (z={zv}, m={m_level}) has too few units")
        if np.any(e[zv][sel] <= 0):
            raise ValidationError(f"cell (z={zv}, m={m_level}) has zero estimated probability")
        mu[zv] = X1 @ ols(X1[sel], y[sel]).coefficients
    res = {}
    ht = [np.mean(ind[v] * y / np.where(ind[v] == 1, e[v], 1)) for v in (0, 1)]
    wsum = [np.mean(ind[v] / np.where(ind[v] == 1, e[v], 1)) for v in (0, 1)]
    reg = [np.mean(mu[v]) for v in (0, 1)]
    dr = [reg[v] + np.mean(ind[v] * (y - mu[v]) / np.where(ind[v] == 1, e[v], 1)) for v in (0, 1)]
    res["reg"] = reg[1] - reg[0]
    res["ht"] = ht[1] - ht[0]
    res["hajek"] = ht[1] / wsum[1] - ht[0] / wsum[0]
    res["dr"] = dr[1] - dr[0]
    return {k: float(v) for k, v in res.items()}


def cde_estimators(z, m, y, X=None, m_level=1, estimator: str = "dr", alpha: float = 0.05,
                   B: int = 200, seed=None, threads=None) -> EstimateReport:
    """Controlled direct effect E{Y(1, m) - Y(0, m)} with joint probabilities
    e_zm(x) = pr(Z=z|x) pr(M=m|Z=z, x) from logistic fits."""
    z, m, y, X = _prep(z, m, y, X)
    if estimator not in ("reg", "ht", "hajek", "dr"):
        raise ValidationError("estimator must be one of reg, ht, hajek, dr")
    for zv in (0, 1):
        if not np.any((z == zv) & (m == m_level)):
            raise ValidationError(f"no units with z={zv} and m={m_level}")

    def stat(d):
        return cde_components(d[0], d[1], d[2], d[3], m_level)[estimator]
    est = stat([z, m, y, X])
    se = float("nan")
    diag = {"m_level": m_level}
    if seed is not None:
        se = bootstrap([z, m, y, X], stat, B, seed, threads).se
        diag["bootstrap_B"] = B
    return EstimateReport.wald(f"CDE({m_level})", est, se, alpha, method=f"cde_{estimator}",
                               n=z.size, diagnostics=diag)

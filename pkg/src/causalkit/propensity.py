"""Propensity-score estimators for observational studies: stratification,
inverse weighting, doubly robust and ATT estimators, overlap weights,
balance checks and two-period sequential weighting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design_estimators import neyman_cre, stratified
from .numerics import bootstrap, logistic_fit, ols, robust_cov, wls, with_intercept
from .reporting import EstimateReport, ValidationError, as_binary, as_matrix

TRUNCATION_PRESETS = {"0.01": (0.01, 0.99), "0.05": (0.05, 0.95), "0.1": (0.1, 0.9)}
DEFAULT_B = 200


@dataclass
class PSModel:
    """Estimated propensity scores with the fit that produced them."""

    scores: np.ndarray
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bounds: tuple | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).ravel()
        if np.any((self.scores <= 0) | (self.scores >= 1)):
            raise ValidationError("propensity scores must lie strictly inside (0, 1)")

    def truncate(self, lo: float = 0.0, hi: float = 1.0) -> "PSModel":
        return PSModel(truncate(self.scores, lo, hi), self.coefficients, (lo, hi))


def truncate(scores, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Clip scores into [lo, hi]; the identity when both bounds are trivial."""
    if not 0 <= lo < hi <= 1:
        raise ValidationError("truncation bounds need 0 <= lo < hi <= 1")
    s = np.asarray(scores, dtype=float)
    return np.minimum(np.maximum(s, lo), hi)


def _trunc_bounds(trunc):
    if trunc is None:
        return 0.0, 1.0
    if isinstance(trunc, str):
        if trunc not in TRUNCATION_PRESETS:
            raise ValidationError(f"unknown truncation preset {trunc!r}")
        return TRUNCATION_PRESETS[trunc]
    lo, hi = trunc
    return float(lo), float(hi)


def fit_pscore(X, z) -> PSModel:
    """Logistic regression of z on (1, X)."""
    z = as_binary(z)
    X = as_matrix(X, z.size)
    fit = logistic_fit(with_intercept(X), z)
    return PSModel(fit.fitted_probabilities, fit.coefficients)


def _scores(ps, n):
    s = ps.scores if isinstance(ps, PSModel) else np.asarray(ps, dtype=float).ravel()
    if s.size != n:
        raise ValidationError(f"got {s.size} propensity scores for {n} units")
    return s


def ps_strata(scores, K: int = 5) -> np.ndarray:
    """Bin index of each score using the K-quantiles as right-closed cut points."""
    if K < 1:
        raise ValidationError("K must be a positive integer")
    s = np.asarray(scores, dtype=float)
    q = np.quantile(s, np.arange(1, K) / K)
    return np.searchsorted(q, s, side="left")


def ps_stratify(ps, z, y, K: int = 5, alpha: float = 0.05) -> EstimateReport:
    """Stratified difference in means within quantile bins of the scores."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float)
    s = _scores(ps, z.size)
    bins = ps_strata(s, K)
    short = []
    for b in np.unique(bins):
        zb = z[bins == b]
        if zb.sum() < 2 or (1 - zb).sum() < 2:
            short.append(int(b))
    if short:
        raise ValidationError(
            f"propensity bins {short} have fewer than 2 treated or 2 control units; "
            "the stratified estimator is not well-defined, use a smaller K")
    if np.unique(bins).size == 1:
        rep = neyman_cre(z, y, alpha)
    else:
        rep = stratified(z, y, bins, alpha)
    rep.method = "ps_stratify"
    rep.diagnostics["K"] = K
    rep.diagnostics["bins_used"] = int(np.unique(bins).size)
    return rep


# ---- point estimators on fixed scores ---------------------------------------

def ht_estimate(z, y, e) -> float:
    return float(np.mean(z * y / e) - np.mean((1 - z) * y / (1 - e)))


def hajek_estimate(z, y, e) -> float:
    w1, w0 = z / e, (1 - z) / (1 - e)
    return float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))


def _outcome_predict(X1, y, sel, family):
    """Fit the outcome model on the selected arm and predict for every unit."""
    if family == "linear":
        fit = ols(X1[sel], y[sel])
        return X1 @ fit.coefficients
    if family == "logistic":
        return logistic_fit(X1[sel], y[sel]).predict(X1)
    raise ValidationError("outcome family must be 'linear' or 'logistic'")


def ate_components(z, y, X, trunc=None, family: str = "linear") -> dict:
    """reg, HT, Hajek and DR estimates of the average causal effect."""
    X1 = with_intercept(X)
    lo, hi = _trunc_bounds(trunc)
    e = truncate(logistic_fit(X1, z).fitted_probabilities, lo, hi)
    mu1 = _outcome_predict(X1, y, z == 1, family)
    mu0 = _outcome_predict(X1, y, z == 0, family)
    reg = float(np.mean(mu1 - mu0))
    dr = reg + float(np.mean(z * (y - mu1) / e) - np.mean((1 - z) * (y - mu0) / (1 - e)))
    return {"reg": reg, "ht": ht_estimate(z, y, e), "hajek": hajek_estimate(z, y, e), "dr": dr}


def _boot_se(data, stat, B, seed, threads):
    if seed is None:
        return None
    return bootstrap(data, stat, B, seed, threads)


def _prep(z, y, X):
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != z.size:
        raise ValidationError("treatment and outcome lengths differ")
    return z, y, as_matrix(X, z.size)


def _report(name, method, est, boot, idx, alpha, n, diag=None):
    se = float(np.asarray(boot.se)[idx]) if boot is not None else float("nan")
    d = dict(diag or {})
    if boot is not None:
        d["bootstrap_B"] = int(boot.replicates.shape[0] + boot.dropped)
        d["bootstrap_dropped"] = int(boot.dropped)
    else:
        d["bootstrap"] = "skipped (no seed)"
    return EstimateReport.wald(name, est, se, alpha, method=method, n=n, diagnostics=d)


def ipw(z, y, X=None, estimator: str = "hajek", trunc=None, ps=None, B: int = DEFAULT_B,
        seed=None, alpha: float = 0.05, threads=None) -> EstimateReport:
    """Horvitz-Thompson or Hajek weighting estimator of the average causal effect.

    Scores come from a logistic fit on X unless ``ps`` is given. The bootstrap
    refits the propensity model within each resample; with supplied scores
    they are resampled along with the units. No seed means no bootstrap.
    """
    z, y, X = _prep(z, y, X)
    if estimator not in ("ht", "hajek"):
        raise ValidationError("estimator must be 'ht' or 'hajek'")
    lo, hi = _trunc_bounds(trunc)
    f = ht_estimate if estimator == "ht" else hajek_estimate
    if ps is not None:
        e0 = _scores(ps, z.size)

        def stat(d):
            return f(d[0], d[1], truncate(d[2], lo, hi))
        data = [z, y, e0]
    else:
        def stat(d):
            e = logistic_fit(with_intercept(d[2]), d[0]).fitted_probabilities
            return f(d[0], d[1], truncate(e, lo, hi))
        data = [z, y, X]
    est = stat(data)
    boot = _boot_se(data, stat, B, seed, threads)
    return _report("ATE", estimator, est, boot, (), alpha, z.size, {"trunc": [lo, hi]})


def doubly_robust_ate(z, y, X, out_family: str = "linear", trunc=None, B: int = DEFAULT_B,
                      seed=None, alpha: float = 0.05, threads=None) -> dict:
    """Outcome-regression, HT, Hajek and doubly robust estimates with a joint
    bootstrap that refits both models; returns a dict of EstimateReports."""
    z, y, X = _prep(z, y, X)
    lo, hi = _trunc_bounds(trunc)
    keys = ("reg", "ht", "hajek", "dr")

    def stat(d):
        c = ate_components(d[0], d[1], d[2], (lo, hi), out_family)
        return [c[k] for k in keys]
    point = stat([z, y, X])
    boot = _boot_se([z, y, X], stat, B, seed, threads)
    diag = {"trunc": [lo, hi], "outcome_family": out_family}
    return {k: _report("ATE", k, point[i], boot, i, alpha, z.size, diag) for i, k in enumerate(keys)}


def att_components(z, y, X, trunc_upper: float = 1.0, family: str = "linear") -> dict:
    """reg0, reg, HT, Hajek and DR estimates of the effect on the treated."""
    X1 = with_intercept(X)
    n, n1 = z.size, z.sum()
    e = np.minimum(logistic_fit(X1, z).fitted_probabilities, trunc_upper)
    odds = e / (1 - e)
    mu0 = _outcome_predict(X1, y, z == 0, family)
    reg0 = float(ols(np.column_stack([X1[:, :1], z, X1[:, 1:]]), y).coefficients[1])
    ybar1 = y[z == 1].mean()
    reg = float(ybar1 - mu0[z == 1].mean())
    w0 = odds * (1 - z)
    ht = float(ybar1 - np.mean(w0 * y) * n / n1)
    hajek = float(ybar1 - np.sum(w0 * y) / np.sum(w0))
    dr = float(reg - np.mean(w0 * (y - mu0)) * n / n1)
    return {"reg0": reg0, "reg": reg, "ht": ht, "hajek": hajek, "dr": dr}


def att_estimators(z, y, X, trunc_upper: float = 1.0, out_family: str = "linear",
                   B: int = DEFAULT_B, seed=None, alpha: float = 0.05, threads=None) -> dict:
    """Estimators of the average causal effect on the treated units.

    Only the upper truncation bound matters because control units are
    weighted by the odds e/(1-e).
    """
    z, y, X = _prep(z, y, X)
    if not 0 < trunc_upper <= 1:
        raise ValidationError("upper truncation bound must lie in (0, 1]")
    keys = ("reg0", "reg", "ht", "hajek", "dr")

    def stat(d):
        c = att_components(d[0], d[1], d[2], trunc_upper, out_family)
        return [c[k] for k in keys]
    point = stat([z, y, X])
    boot = _boot_se([z, y, X], stat, B, seed, threads)
    diag = {"trunc_upper": trunc_upper, "outcome_family": out_family}
    return {k: _report("ATT", k, point[i], boot, i, alpha, z.size, diag) for i, k in enumerate(keys)}


def tau_o_components(z, y, X, form: str = "centred") -> float:
    """Coefficient of Z - e in OLS of Y on (1, Z - e) ("centred"), or of Z in
    OLS of Y on (1, Z, e, X) ("covariates"), with e from the logistic fit."""
    X1 = with_intercept(X)
    e = logistic_fit(X1, z).fitted_probabilities
    if form == "centred":
        return float(ols(np.column_stack([np.ones(z.size), z - e]), y).coefficients[1])
    if form == "covariates":
        return float(ols(np.column_stack([np.ones(z.size), z, e, X1[:, 1:]]), y).coefficients[1])
    raise ValidationError("form must be 'centred' or 'covariates'")


def overlap_weight_tau_O(z, y, X, form: str = "centred", B: int = DEFAULT_B, seed=None,
                         alpha: float = 0.05, threads=None) -> EstimateReport:
    """Regression on the centred treatment Z - e(X), which targets the
    overlap-weighted effect E{e(1-e) tau(X)} / E{e(1-e)}.

    ``form="covariates"`` uses the coefficient of Z in Y ~ (1, Z, e, X)
    instead; the two coincide in the population but not in samples.
    """
    z, y, X = _prep(z, y, X)
    if form not in ("centred", "covariates"):
        raise ValidationError("form must be 'centred' or 'covariates'")

    def stat(d):
        return tau_o_components(d[0], d[1], d[2], form)
    est = stat([z, y, X])
    boot = _boot_se([z, y, X], stat, B, seed, threads)
    return _report("ATO", "overlap_" + form, est, boot, (), alpha, z.size)


def hajek_weights(z, e, target: str = "ate") -> np.ndarray:
    if target == "ate":
        return z / e + (1 - z) / (1 - e)
    if target == "att":
        return z + (1 - z) * e / (1 - e)
    raise ValidationError("target must be 'ate' or 'att'")


def wls_forms(z, y, X, e, target: str = "ate") -> dict:
    """Coefficient of Z in the weighted interacted regression together with the
    regression and doubly robust estimators built from the same weighted fits."""
    X = as_matrix(X, z.size)
    w = hajek_weights(z, e, target)
    centre = X.mean(axis=0) if target == "ate" else X[z == 1].mean(axis=0)
    Xc = X - centre
    D = np.column_stack([np.ones(z.size), z, Xc, z[:, None] * Xc])
    fit = wls(D, y, w)
    p = X.shape[1]
    b = fit.coefficients
    mu0 = b[0] + Xc @ b[2:2 + p]
    mu1 = b[0] + b[1] + Xc @ (b[2:2 + p] + b[2 + p:])
    if target == "ate":
        reg = float(np.mean(mu1 - mu0))
        dr = reg + float(np.mean(z * (y - mu1) / e) - np.mean((1 - z) * (y - mu0) / (1 - e)))
    else:
        n1 = z.sum()
        reg = float(y[z == 1].mean() - np.sum(z * mu0) / n1)
        dr = reg - float(np.sum(e / (1 - e) * (1 - z) * (y - mu0)) / n1)
    return {"coef": float(b[1]), "reg": reg, "dr": dr, "fit": fit}


def hajek_wls(z, y, X=None, target: str = "ate", adjust: bool = True, B: int = DEFAULT_B,
              seed=None, alpha: float = 0.05, threads=None) -> EstimateReport:
    """Weighted least squares of Y on (1, Z, Xc, Z Xc), or on (1, Z) when
    ``adjust`` is False, with Hajek weights; the propensity model always uses
    all of X.

    The WLS standard error ignores the estimated scores, so the reported SE is
    the bootstrap one over the two-step fit.
    """
    z, y, X = _prep(z, y, X)

    def stat(d):
        e = logistic_fit(with_intercept(d[2]), d[0]).fitted_probabilities
        return wls_forms(d[0], d[1], d[2] if adjust else None, e, target)["coef"]
    est = stat([z, y, X])
    boot = _boot_se([z, y, X], stat, B, seed, threads)
    return _report(target.upper(), "hajek_wls", est, boot, (), alpha, z.size)


def weighted_estimand(z, y, e, h: str = "ate", normalize: bool = True) -> float:
    """Weighting estimator of E{h(X) tau(X)} / E{h(X)} for h in
    {ate: 1, att: e, atc: 1-e, overlap: e(1-e)}.

    With ``normalize`` each arm's weights are rescaled to sum to one;
    otherwise the HT-type form n^-1 sum{Z Y h / e - (1-Z) Y h / (1-e)} / mean(h).
    """
    z = as_binary(z)
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    hv = {"ate": np.ones_like(e), "att": e, "atc": 1 - e, "overlap": e * (1 - e)}.get(h)
    if hv is None:
        raise ValidationError("h must be one of ate, att, atc, overlap")
    w1, w0 = hv * z / e, hv * (1 - z) / (1 - e)
    if normalize:
        return float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))
    return float((np.mean(w1 * y) - np.mean(w0 * y)) / np.mean(hv))


def weighted_estimand_regression(z, y, X, h: str = "ate") -> float:
    """Regression form sum h (mu1 - mu0) / sum h with arm-wise linear fits."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float)
    X1 = with_intercept(as_matrix(X, z.size))
    e = logistic_fit(X1, z).fitted_probabilities
    hv = {"ate": np.ones_like(e), "att": e, "atc": 1 - e, "overlap": e * (1 - e)}.get(h)
    if hv is None:
        raise ValidationError("h must be one of ate, att, atc, overlap")
    mu1 = _outcome_predict(X1, y, z == 1, "linear")
    mu0 = _outcome_predict(X1, y, z == 0, "linear")
    return float(np.sum(hv * (mu1 - mu0)) / np.sum(hv))


@dataclass
class BalanceTable:
    names: list
    rows: list  # EstimateReport per covariate
    method: str

    def __len__(self):
        return len(self.rows)

    def imbalanced(self) -> list:
        """Covariates whose interval excludes zero."""
        return [nm for nm, r in zip(self.names, self.rows) if not r.ci[0] <= 0 <= r.ci[1]]

    def as_dict(self) -> dict:
        return {"method": self.method,
                "covariates": [dict(name=nm, **{k: v for k, v in r.as_dict().items() if k != "diagnostics"})
                               for nm, r in zip(self.names, self.rows)]}


def balance_check(ps, z, X, method: str = "stratified", K: int = 5, names=None,
                  alpha: float = 0.05) -> BalanceTable:
    """Estimated 'effect' of treatment on each covariate, whose true value is 0.

    ``stratified`` uses K propensity bins; ``hajek`` uses the Hajek weighted
    difference with the HC2 standard error of the equivalent weighted
    regression, treating the scores as fixed. ``unweighted`` is the raw
    difference in means for comparison.
    """
    z = as_binary(z)
    X = as_matrix(X, z.size)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValidationError("one name per covariate is required")
    e = _scores(ps, z.size) if method != "unweighted" else None
    rows = []
    for j in range(X.shape[1]):
        x = X[:, j]
        if method == "stratified":
            rows.append(ps_stratify(e, z, x, K, alpha))
        elif method == "hajek":
            fit = wls(np.column_stack([np.ones(z.size), z]), x, hajek_weights(z, e, "ate"))
            se = robust_cov(fit, "HC2").se()[1]
            rows.append(EstimateReport.wald("balance", fit.coefficients[1], se, alpha,
                                            method="hajek", n=z.size))
        elif method == "unweighted":
            rows.append(neyman_cre(z, x, alpha))
        else:
            raise ValidationError("method must be 'stratified', 'hajek' or 'unweighted'")
    return BalanceTable(names, rows, method)


def sequential_components(z1, z2, y, X0, X1, target=(1, 1)) -> dict:
    H0 = with_intercept(X0)
    H1 = np.column_stack([H0, z1, X1])
    e1 = logistic_fit(H0, z1).fitted_probabilities
    e2 = logistic_fit(H1, z2).fitted_probabilities
    a, b = target
    p1 = e1 if a == 1 else 1 - e1
    p2 = e2 if b == 1 else 1 - e2
    ind = ((z1 == a) & (z2 == b)).astype(float)
    w = ind / (p1 * p2)
    return {"ht": float(np.mean(w * y)), "hajek": float(np.sum(w * y) / np.sum(w))}


def sequential_ipw(z1, z2, y, X0=None, X1=None, target=(1, 1), contrast=None,
                   estimator: str = "hajek", B: int = DEFAULT_B, seed=None,
                   alpha: float = 0.05, threads=None) -> EstimateReport:
    """Two-period inverse weighting for the mean of Y(target), or for the
    difference E Y(target) - E Y(contrast) when ``contrast`` is given.

    Scores: Z1 ~ (1, X0) and Z2 ~ (1, X0, Z1, X1), both logistic.
    """
    if isinstance(z1, (list, tuple)) and len(z1) > 2 and np.ndim(z1[0]) > 0:
        raise ValidationError("only two treatment periods are supported; "
                              "longer sequences need marginal structural models")
    z1, y, X0 = _prep(z1, y, X0)
    z2 = as_binary(z2)
    X1 = as_matrix(X1, z1.size)
    if estimator not in ("ht", "hajek"):
        raise ValidationError("estimator must be 'ht' or 'hajek'")
    for t in (target,) + ((contrast,) if contrast is not None else ()):
        if len(t) != 2 or any(v not in (0, 1) for v in t):
            raise ValidationError("treatment sequences are pairs of 0/1 values")

    def stat(d):
        v = sequential_components(d[0], d[1], d[2], d[3], d[4], target)[estimator]
        if contrast is not None:
            v -= sequential_components(d[0], d[1], d[2], d[3], d[4], contrast)[estimator]
        return v
    data = [z1, z2, y, X0, X1]
    est = stat(data)
    boot = _boot_se(data, stat, B, seed, threads)
    name = f"E[Y{tuple(target)}]" if contrast is None else f"E[Y{tuple(target)}]-E[Y{tuple(contrast)}]"
    return _report(name, "seq_" + estimator, est, boot, (), alpha, z1.size)

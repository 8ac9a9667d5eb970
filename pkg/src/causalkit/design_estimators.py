"""Design-based estimators for randomized experiments: difference in means,
stratification, regression adjustment, matched pairs and matched sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import LinearFit, ols, robust_cov
from .reporting import EstimateReport, NumericError, ValidationError, as_binary, as_matrix


@dataclass
class SimTruth:
    """A fixed science table of potential outcomes."""

    y1: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        self.y1 = np.asarray(self.y1, dtype=float)
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.y1.shape != self.y0.shape:
            raise ValidationError("potential outcome vectors differ in length")

    @property
    def n(self):
        return self.y1.size

    @property
    def tau(self):
        return float(np.mean(self.y1 - self.y0))

    @property
    def s2_1(self):
        return float(np.var(self.y1, ddof=1))

    @property
    def s2_0(self):
        return float(np.var(self.y0, ddof=1))

    @property
    def s_10(self):
        return float(np.cov(self.y1, self.y0, ddof=1)[0, 1])

    @property
    def s2_tau(self):
        return float(np.var(self.y1 - self.y0, ddof=1))

    def var_diff_means(self, n1: int) -> float:
        """Exact randomization variance of the difference in means."""
        n0 = self.n - n1
        return self.s2_1 / n1 + self.s2_0 / n0 - self.s2_tau / self.n

    def observe(self, z) -> np.ndarray:
        z = np.asarray(z)
        return np.where(z == 1, self.y1, self.y0)


def _arms(z, y):
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != z.shape:
        raise ValidationError("treatment and outcome lengths differ")
    return z, y, y[z == 1], y[z == 0]


def neyman_cre(z, y, alpha: float = 0.05) -> EstimateReport:
    """Difference in means with the conservative variance estimate."""
    z, y, y1, y0 = _arms(z, y)
    n1, n0 = y1.size, y0.size
    if n1 < 2 or n0 < 2:
        raise ValidationError(f"each arm needs at least 2 units for a standard error (n1={n1}, n0={n0})")
    est = y1.mean() - y0.mean()
    v = y1.var(ddof=1) / n1 + y0.var(ddof=1) / n0
    return EstimateReport.wald("ATE", est, np.sqrt(v), alpha, method="neyman", n=z.size,
                               diagnostics={"n1": n1, "n0": n0})


def neyman_alt_variance(z, y) -> float:
    """The sharper bound n^-1 (sqrt(n0/n1) S(1) + sqrt(n1/n0) S(0))^2."""
    z, y, y1, y0 = _arms(z, y)
    n1, n0 = y1.size, y0.size
    if n1 < 2 or n0 < 2:
        raise ValidationError("each arm needs at least 2 units")
    n = n1 + n0
    s1, s0 = y1.std(ddof=1), y0.std(ddof=1)
    return float((np.sqrt(n0 / n1) * s1 + np.sqrt(n1 / n0) * s0) ** 2 / n)


def _stratum_codes(strata):
    labels, codes = np.unique(np.asarray(strata), return_inverse=True)
    return labels, codes


def stratified(z, y, strata, alpha: float = 0.05, drop_small: bool = False) -> EstimateReport:
    """Stratified (or post-stratified) difference in means.

    Strata without two units per arm cannot contribute a variance; they raise
    unless ``drop_small`` is set, in which case they are dropped and the
    stratum weights renormalised.
    """
    z, y, _, _ = _arms(z, y)
    labels, codes = _stratum_codes(strata)
    if codes.size != z.size:
        raise ValidationError("stratum labels must have one entry per unit")
    rows, small = [], []
    for k, lab in enumerate(labels):
        sel = codes == k
        yk, zk = y[sel], z[sel]
        n1, n0 = int(zk.sum()), int((1 - zk).sum())
        if n1 < 2 or n0 < 2:
            small.append(lab.item() if hasattr(lab, "item") else lab)
            continue
        y1, y0 = yk[zk == 1], yk[zk == 0]
        rows.append((lab, sel.sum(), y1.mean() - y0.mean(), y1.var(ddof=1) / n1 + y0.var(ddof=1) / n0))
    if small and not drop_small:
        raise ValidationError(
            f"strata {small} have fewer than 2 treated or 2 control units; "
            "use drop_small=True or analyse them as matched pairs")
    if not rows:
        raise ValidationError("no stratum supports estimation")
    sizes = np.array([r[1] for r in rows], dtype=float)
    pi = sizes / sizes.sum()
    taus = np.array([r[2] for r in rows])
    vars_ = np.array([r[3] for r in rows])
    est = float(pi @ taus)
    v = float(pi**2 @ vars_)
    diag = {
        "strata": [{"label": _plain(r[0]), "n": int(r[1]), "estimate": float(r[2]), "se": float(np.sqrt(r[3]))}
                   for r in rows],
        "dropped_strata": [_plain(s) for s in small],
    }
    return EstimateReport.wald("ATE", est, np.sqrt(v), alpha, method="stratified", n=int(sizes.sum()),
                               diagnostics=diag)


def _plain(v):
    return v.item() if hasattr(v, "item") else v


def lin_design(z, X):
    """Design (1, Z, Xc, Z*Xc) with covariates centred at their grand mean."""
    z = np.asarray(z, dtype=float)
    Xc = X - X.mean(axis=0)
    return np.column_stack([np.ones(z.size), z, Xc, z[:, None] * Xc]), Xc


def lin_fit(z, y, X) -> tuple[LinearFit, np.ndarray]:
    z = as_binary(z)
    X = as_matrix(X, z.size)
    D, Xc = lin_design(z, X)
    p = X.shape[1]
    names = ["(intercept)", "z"] + [f"x{j}" for j in range(p)] + [f"z:x{j}" for j in range(p)]
    return ols(D, y, names=names), Xc


def lin_adjust(z, y, X=None, population: str = "finite", alpha: float = 0.05,
               hc: str = "HC2") -> EstimateReport:
    """Coefficient of Z in the fully interacted regression with centred covariates.

    The finite-population standard error is the robust one; ``population="super"``
    adds (b1 - b0)' S_X^2 (b1 - b0) / n for the sampling variability of the
    covariate means.
    """
    z = as_binary(z)
    X = as_matrix(X, z.size)
    if X.shape[1] == 0:
        rep = neyman_cre(z, y, alpha)
        rep.method = "lin"
        return rep
    fit, Xc = lin_fit(z, y, X)
    V = robust_cov(fit, hc).matrix
    v = V[1, 1]
    p = X.shape[1]
    diag = {"hc": hc, "population": population}
    if population == "super":
        inter = fit.coefficients[2 + p:]
        S = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
        extra = float(inter @ S @ inter) / z.size
        v = v + extra
        diag["correction"] = extra
    elif population != "finite":
        raise ValidationError("population must be 'finite' or 'super'")
    return EstimateReport.wald("ATE", fit.coefficients[1], np.sqrt(v), alpha, method="lin",
                               n=z.size, diagnostics=diag)


def gain_score(z, y, x_lag, alpha: float = 0.05) -> EstimateReport:
    """Difference in means of the gains y - x_lag."""
    y = np.asarray(y, dtype=float)
    x_lag = np.asarray(x_lag, dtype=float)
    if y.shape != x_lag.shape:
        raise ValidationError("lagged outcome must match the outcome length")
    rep = neyman_cre(z, y - x_lag, alpha)
    rep.method = "gain"
    return rep


def pair_differences(pair_id, z, y, X=None):
    """Within-pair treated-minus-control differences of outcome and covariates.

    Each pair must contain exactly one treated and one control unit. Pairs are
    returned in order of first appearance.
    """
    pair_id = np.asarray(pair_id)
    z = as_binary(z)
    y = np.asarray(y, dtype=float)
    X = as_matrix(X, z.size)
    _, first = np.unique(pair_id, return_index=True)
    order = pair_id[np.sort(first)]
    d = np.empty(order.size)
    dX = np.empty((order.size, X.shape[1]))
    for i, g in enumerate(order):
        sel = np.flatnonzero(pair_id == g)
        if sel.size != 2 or z[sel].sum() != 1:
            raise ValidationError(f"pair {_plain(g)} must hold one treated and one control unit")
        t, c = (sel[0], sel[1]) if z[sel[0]] == 1 else (sel[1], sel[0])
        d[i] = y[t] - y[c]
        dX[i] = X[t] - X[c]
    return d, dX


def mpe(diffs, diff_X=None, alpha: float = 0.05) -> EstimateReport:
    """Matched-pairs estimate from within-pair differences.

    Without covariates: mean difference with variance sample-var / n. With
    covariate differences: intercept of the regression of the outcome
    differences on (1, covariate differences) with its model-based SE.
    """
    d = np.asarray(diffs, dtype=float).ravel()
    n = d.size
    dX = as_matrix(diff_X, n)
    p = dX.shape[1]
    if n < p + 2:
        raise ValidationError(f"{n} pairs are too few for {p} covariates")
    fit = ols(np.column_stack([np.ones(n), dX]), d)
    est = fit.coefficients[0]
    se = float(np.sqrt(fit.model_cov[0, 0]))
    diag = {"pairs": n}
    if p:
        diag["slopes"] = fit.coefficients[1:].tolist()
    return EstimateReport.wald("ATE", est, se, alpha, method="mpe" if p == 0 else "mpe_adjusted",
                               n=n, diagnostics=diag)


def mpe_covariance(diffs, diff_X):
    """(theta_hat, cov(tau_X)): the unbiased estimate of cov(tau_X, tau) and the
    known randomization covariance of the mean covariate difference."""
    d = np.asarray(diffs, dtype=float).ravel()
    dX = as_matrix(diff_X, d.size)
    n = d.size
    theta = (dX - dX.mean(axis=0)).T @ (d - d.mean()) / (n * (n - 1))
    cov_x = dX.T @ dX / n**2
    return theta, cov_x


def matched_sets_weighted(set_estimates, weights, alpha: float = 0.05) -> EstimateReport:
    """Weighted average of matched-set effects with the conservative variance
    sum_i c_i (tau_i - tau_w)^2."""
    t = np.asarray(set_estimates, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if t.shape != w.shape:
        raise ValidationError("one weight per matched set is required")
    if not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
        raise ValidationError("weights must sum to 1")
    if np.any(w >= 0.5):
        raise ValidationError("every weight must be below 1/2")
    est = float(w @ t)
    r = w**2 / (1 - 2 * w)
    c = r / (1 + r.sum())
    v = float(c @ (t - est) ** 2)
    return EstimateReport.wald("ATE_w", est, np.sqrt(v), alpha, method="matched_sets", n=t.size)


def lin_sre(z, y, X, strata, alpha: float = 0.05, hc: str = "HC2") -> EstimateReport:
    """Lin adjustment within each stratum (covariates centred by stratum),
    combined with stratum-size weights."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float)
    X = as_matrix(X, z.size)
    labels, codes = _stratum_codes(strata)
    n = z.size
    est, v, bad, per = 0.0, 0.0, [], []
    for k, lab in enumerate(labels):
        sel = codes == k
        try:
            rep = lin_adjust(z[sel], y[sel], X[sel], "finite", alpha, hc)
        except (ValidationError, NumericError) as exc:
            bad.append((_plain(lab), str(exc)))
            continue
        pi = sel.sum() / n
        est += pi * rep.estimate
        v += pi**2 * rep.se**2
        per.append({"label": _plain(lab), "estimate": rep.estimate, "se": rep.se})
    if bad:
        raise ValidationError("strata too small for regression adjustment: "
                              + "; ".join(f"{lab}: {msg}" for lab, msg in bad))
    return EstimateReport.wald("ATE", est, np.sqrt(v), alpha, method="lin_sre", n=n,
                               diagnostics={"strata": per, "hc": hc})

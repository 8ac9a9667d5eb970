"""Nearest-neighbour matching with replacement, bias correction and the
linear-expansion variance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ols, with_intercept
from .reporting import EstimateReport, ValidationError, as_binary, as_matrix, parallel_map

CHUNK = 256


@dataclass
class MatchResult:
    """matches[i] holds the M opposite-arm indices matched to unit i (-1 rows
    for units that are not matched, i.e. controls under ATT)."""

    matches: np.ndarray
    counts: np.ndarray
    M: int
    metric: str
    target: str

    def match_set(self, i) -> np.ndarray:
        return self.matches[i]


def _scaling(X, metric):
    if metric == "euclidean":
        return X
    if metric == "mahalanobis":
        S = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            d = np.diag(S)
            bad = int(np.argmin(d)) if np.any(d <= 1e-12 * max(1.0, d.max())) else None
            where = f" (column x{bad} has no variance)" if bad is not None else ""
            raise ValidationError(f"covariate covariance is singular{where}; use the euclidean metric "
                                  "or drop collinear columns") from None
        # whitened coordinates: euclidean distance equals the Mahalanobis distance
        return np.linalg.solve(L, X.T).T
    raise ValidationError("metric must be 'euclidean' or 'mahalanobis'")


def _nearest(Q, R, M):
    """Indices into R of the M nearest rows for each row of Q; ties go to the
    lower index because the sort is stable."""
    d = (np.sum(Q**2, axis=1)[:, None] - 2 * Q @ R.T + np.sum(R**2, axis=1)[None, :])
    # exact squared differences where the expansion loses precision near zero
    d = np.maximum(d, 0.0)
    tiny = d < 1e-9 * (1 + np.sum(Q**2, axis=1)[:, None])
    if np.any(tiny):
        qi, ri = np.nonzero(tiny)
        d[qi, ri] = np.sum((Q[qi] - R[ri]) ** 2, axis=1)
    return np.argsort(d, axis=1, kind="stable")[:, :M]


def match_nn(X, z, M: int = 1, metric: str = "euclidean", target: str = "ate",
             threads=None) -> MatchResult:
    """M nearest opposite-arm neighbours for every unit (ATE) or for every
    treated unit (ATT), with replacement."""
    z = as_binary(z)
    X = as_matrix(X, z.size)
    if X.shape[1] == 0:
        raise ValidationError("matching needs at least one covariate")
    if target not in ("ate", "att"):
        raise ValidationError("target must be 'ate' or 'att'")
    if M < 1:
        raise ValidationError("M must be at least 1")
    W = _scaling(X, metric)
    idx1, idx0 = np.flatnonzero(z == 1), np.flatnonzero(z == 0)
    need0 = True
    need1 = target == "ate"
    if need0 and idx0.size < M:
        raise ValidationError(f"M={M} exceeds the {idx0.size} control units")
    if need1 and idx1.size < M:
        raise ValidationError(f"M={M} exceeds the {idx1.size} treated units")
    matches = -np.ones((z.size, M), dtype=int)

    def run(query, pool):
        chunks = [query[s:s + CHUNK] for s in range(0, query.size, CHUNK)]
        out = parallel_map(lambda q: pool[_nearest(W[q], W[pool], M)], chunks, threads)
        for q, m in zip(chunks, out):
            matches[q] = m

    run(idx1, idx0)
    if need1:
        run(idx0, idx1)
    used = matches[matches >= 0]
    counts = np.bincount(used, minlength=z.size)
    return MatchResult(matches, counts, M, metric, target)


def _arm_predictions(X, y, z):
    X1 = with_intercept(X)
    mu1 = X1 @ ols(X1[z == 1], y[z == 1]).coefficients
    mu0 = X1 @ ols(X1[z == 0], y[z == 0]).coefficients
    return mu1, mu0


def matching_point(y, z, mr: MatchResult, mu1=None, mu0=None) -> float:
    """Direct form: imputed differences minus the estimated matching bias."""
    M = mr.M
    n = z.size
    if mr.target == "ate":
        imputed = y[mr.matches].mean(axis=1)
        y1 = np.where(z == 1, y, imputed)
        y0 = np.where(z == 1, imputed, y)
        est = np.mean(y1 - y0)
        if mu1 is not None:
            other = np.where(z[:, None] == 1, mu0[mr.matches], mu1[mr.matches])
            own = np.where(z == 1, mu0, mu1)
            b = (2 * z - 1) * (own - other.sum(axis=1) / M)
            est -= b.sum() / n
        return float(est)
    t = np.flatnonzero(z == 1)
    est = np.mean(y[t] - y[mr.matches[t]].mean(axis=1))
    if mu0 is not None:
        est -= np.mean(mu0[t] - mu0[mr.matches[t]].mean(axis=1))
    return float(est)


def matching_psi(y, z, mr: MatchResult, mu1, mu0) -> np.ndarray:
    """Linear-expansion terms whose mean (ATE) or n/n1-scaled mean (ATT) is the estimate."""
    k = 1 + mr.counts / mr.M
    if mr.target == "ate":
        res = np.where(z == 1, y - mu1, y - mu0)
        return mu1 - mu0 + (2 * z - 1) * k * res
    res0 = y - mu0
    return z * res0 - (1 - z) * (mr.counts / mr.M) * res0


def matching_dr_form(y, z, mr: MatchResult, mu1, mu0) -> float:
    """Outcome regression plus (1 + K/M)- or K/M-weighted residual corrections."""
    res = np.where(z == 1, y - mu1, y - mu0)
    if mr.target == "ate":
        reg = np.mean(mu1 - mu0)
        k = 1 + mr.counts / mr.M
        return float(reg + np.mean(k * z * res) - np.mean(k * (1 - z) * res))
    n1 = z.sum()
    reg = np.sum(z * (y - mu0)) / n1
    return float(reg - np.sum(mr.counts / mr.M * (1 - z) * res) / n1)


def matching_estimate(z, y, X, M: int = 1, metric: str = "euclidean", target: str = "ate",
                      bias_correct: bool = True, alpha: float = 0.05, threads=None) -> EstimateReport:
    """Matching estimator of the ATE or ATT with variance from the linear
    expansion, n^-2 sum (psi_i - tau)^2 or its ATT analogue.

    Without bias correction the expansion is taken with zero outcome models.
    """
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    X = as_matrix(X, z.size)
    if y.size != z.size:
        raise ValidationError("treatment and outcome lengths differ")
    mr = match_nn(X, z, M, metric, target, threads)
    if bias_correct:
        mu1, mu0 = _arm_predictions(X, y, z)
    else:
        mu1 = mu0 = np.zeros(z.size)
    est = matching_point(y, z, mr, mu1 if bias_correct else None, mu0 if bias_correct else None)
    psi = matching_psi(y, z, mr, mu1, mu0)
    n = z.size
    if target == "ate":
        v = np.sum((psi - est) ** 2) / n**2
    else:
        n1 = z.sum()
        v = np.sum((psi - est * n1 / n) ** 2) / n1**2
    diag = {"M": M, "metric": metric, "bias_corrected": bias_correct,
            "max_reuse": int(mr.counts.max()),
            "matched_controls": int(np.sum((mr.counts > 0) & (z == 0)))}
    return EstimateReport.wald(target.upper(), est, np.sqrt(v), alpha,
                               method="matching_bc" if bias_correct else "matching", n=n,
                               diagnostics=diag)

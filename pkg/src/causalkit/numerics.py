"""Least squares, logistic regression, sandwich covariances and the bootstrap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .reporting import (
    ConvergenceError,
    NumericError,
    SeparationError,
    SingularDesignError,
    ValidationError,
    parallel_map,
)

RANK_TOL = 1e-10


@dataclass
class LinearFit:
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    leverages: np.ndarray
    model_cov: np.ndarray
    xtx_inverse: np.ndarray
    X: np.ndarray
    weights: np.ndarray
    names: list

    @property
    def n(self) -> int:
        return int(np.sum(self.weights > 0))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def coef(self, name):
        return self.coefficients[self.names.index(name)]


@dataclass
class LogisticFit:
    coefficients: np.ndarray
    fitted_probabilities: np.ndarray
    info_matrix: np.ndarray
    converged: bool
    iterations: int

    @property
    def cov(self) -> np.ndarray:
        return np.linalg.inv(self.info_matrix)

    def predict(self, X) -> np.ndarray:
        return expit(np.asarray(X, dtype=float) @ self.coefficients)


@dataclass
class RobustCov:
    variant: str
    matrix: np.ndarray

    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.matrix))


@dataclass
class BootstrapResult:
    replicates: np.ndarray
    se: np.ndarray | float
    point: np.ndarray | float
    dropped: int = 0


def _column_names(X, names):
    if names is None:
        return [f"x{j}" for j in range(X.shape[1])]
    names = list(names)
    if len(names) != X.shape[1]:
        raise ValidationError("names must match the number of columns")
    return names


def find_rank_deficiency(X: np.ndarray, names=None):
    """Return the name of the first column that is (numerically) a linear
    combination of the earlier ones, or None when X has full column rank."""
    names = _column_names(X, names)
    if X.shape[1] == 0:
        return None
    s = np.linalg.svd(X, compute_uv=False)
    if s.size and s[-1] >= RANK_TOL * s[0] and s[0] > 0:
        return None
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    for j in range(X.shape[1]):
        sj = np.linalg.svd(Xs[:, : j + 1], compute_uv=False)
        if sj[0] == 0 or sj[-1] < RANK_TOL * sj[0]:
            return names[j]
    return names[-1]


def _check_inputs(X, y, w):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"design has {X.shape[0]} rows but response has {y.shape[0]}")
    if w is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(w, dtype=float).ravel()
        if w.shape != y.shape:
            raise ValidationError("weights must have one entry per row")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        if not np.sum(w) > 0:
            raise ValidationError("weights must have a positive sum")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise ValidationError("non-finite values in regression inputs")
    return X, y, w


def wls(X, y, w=None, names=None) -> LinearFit:
    """Weighted least squares via a QR factorisation of sqrt(w) X.

    Rows with zero weight do not influence the fit; their leverages are 0.
    """
    X, y, w = _check_inputs(X, y, w)
    names = _column_names(X, names)
    n_eff = int(np.sum(w > 0))
    p = X.shape[1]
    if n_eff < p:
        raise SingularDesignError(f"{n_eff} weighted rows for {p} columns", column=None)
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    bad = find_rank_deficiency(Xw, names)
    if bad is not None:
        raise SingularDesignError(f"design is rank deficient; column '{bad}' is collinear", column=bad)
    Q, R = np.linalg.qr(Xw)
    beta = solve_triangular(R, Q.T @ (sw * y))
    Rinv = solve_triangular(R, np.eye(p))
    xtx_inv = Rinv @ Rinv.T
    fitted = X @ beta
    resid = y - fitted
    lev = np.sum(Q * Q, axis=1)
    dof = n_eff - p
    sigma2 = float(np.sum(w * resid**2) / dof) if dof > 0 else np.nan
    return LinearFit(
        coefficients=beta,
        fitted=fitted,
        residuals=resid,
        leverages=lev,
        model_cov=sigma2 * xtx_inv,
        xtx_inverse=xtx_inv,
        X=X,
        weights=w,
        names=names,
    )


def ols(X, y, names=None) -> LinearFit:
    return wls(X, y, None, names=names)


def with_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.column_stack([np.ones(X.shape[0]), X])


def robust_cov(fit: LinearFit, variant: str = "HC2", residuals=None) -> RobustCov:
    """Eicker-Huber-White sandwich covariance.

    ``residuals`` overrides the fit residuals (used by two-stage least squares,
    whose sandwich needs structural rather than second-stage residuals).
    """
    variant = variant.upper()
    e = fit.residuals if residuals is None else np.asarray(residuals, dtype=float)
    w = fit.weights
    h = fit.leverages
    n, p = fit.n, fit.p
    active = w > 0
    e2 = e**2
    if variant == "HC0":
        adj = e2
    elif variant == "HC1":
        if n <= p:
            raise NumericError("HC1 needs more rows than columns")
        adj = e2 * n / (n - p)
    elif variant in ("HC2", "HC3"):
        if np.any(h[active] >= 1 - 1e-10):
            rows = np.flatnonzero(active & (h >= 1 - 1e-10)).tolist()
            raise NumericError(f"leverage equals one for rows {rows[:10]}; {variant} undefined")
        power = 1 if variant == "HC2" else 2
        adj = np.where(active, e2 / np.where(active, 1 - h, 1.0) ** power, 0.0)
    else:
        raise ValidationError(f"unknown robust covariance variant {variant}")
    Xw = fit.X * w[:, None]
    meat = Xw.T @ (Xw * adj[:, None])
    V = fit.xtx_inverse @ meat @ fit.xtx_inverse
    V = 0.5 * (V + V.T)
    return RobustCov(variant=variant, matrix=V)


def _loglik(eta, y, w):
    # sum of w * (y * eta - log(1 + exp(eta)))
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def logistic_fit(X, y, w=None, max_iter=100, tol=1e-10, max_halvings=30) -> LogisticFit:
    """Binomial-logit maximum likelihood by Newton-Raphson with step halving."""
    X, y, w = _check_inputs(X, y, w)
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("logistic response must be binary 0/1")
    bad = find_rank_deficiency(X[w > 0])
    if bad is not None:
        raise SingularDesignError(f"logistic design is rank deficient at column '{bad}'", column=bad)
    beta = np.zeros(X.shape[1])
    eta = X @ beta
    ll = _loglik(eta, y, w)
    trace = []
    for it in range(1, max_iter + 1):
        pi = expit(eta)
        score = X.T @ (w * (y - pi))
        info = X.T @ (X * (w * pi * (1 - pi))[:, None])
        trace.append((it, ll, float(np.max(np.abs(score)))))
        if np.max(np.abs(score)) < tol:
            return LogisticFit(beta, pi, info, True, it - 1)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y, w)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, eta, ll_prev, ll = cand, eta_c, ll, ll_c
        if np.linalg.norm(beta) > 1e4:
            raise SeparationError("coefficients diverge (norm > 1e4); data appear separated")
        # separated data: likelihood approaches its supremum of 0 while the
        # coefficients keep growing
        if ll > -1e-9 * max(1.0, np.sum(w)) and np.max(np.abs(eta)) > 20:
            raise SeparationError("fitted probabilities reach 0 or 1; data appear separated")
        if abs(ll - ll_prev) < 1e-15 * max(1.0, abs(ll)) and np.max(np.abs(t * step)) < 1e-13:
            pi = expit(eta)
            score = X.T @ (w * (y - pi))
            if np.max(np.abs(score)) < 1e-8:
                info = X.T @ (X * (w * pi * (1 - pi))[:, None])
                return LogisticFit(beta, pi, info, True, it)
    raise ConvergenceError(f"logistic fit did not converge in {max_iter} iterations", trace=trace)


def fwl_residualize(X1, X2, y) -> np.ndarray:
    """Coefficient(s) of X1 after partialling X2 out of both X1 and y."""
    X1 = np.asarray(X1, dtype=float)
    if X1.ndim == 1:
        X1 = X1.reshape(-1, 1)
    X2 = np.asarray(X2, dtype=float)
    if X2.ndim == 1:
        X2 = X2.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    if X2.shape[1] > 0:
        fit_y = ols(X2, y)
        ry = fit_y.residuals
        rX1 = np.column_stack([ols(X2, X1[:, j]).residuals for j in range(X1.shape[1])])
    else:
        ry, rX1 = y, X1
    return ols(rX1, ry).coefficients


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    """Generator for replicate r; depends only on (seed, r)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(r)]))


class UndefinedStatistic(Exception):
    """Raised by a statistic that is undefined on a particular resample."""


_DROPPABLE = (UndefinedStatistic, NumericError, ValidationError, np.linalg.LinAlgError,
              FloatingPointError, ZeroDivisionError)


def bootstrap(data, statistic: Callable, B: int, seed: int, threads=None) -> BootstrapResult:
    """Nonparametric bootstrap over units.

    ``data`` is an array (rows = units) or a sequence of arrays sharing the
    first dimension; ``statistic`` receives the resampled data in the same
    form and returns a scalar or a vector.
    """
    if B < 2:
        raise ValidationError("bootstrap needs B >= 2")
    if seed is None:
        raise ValidationError("bootstrap needs an explicit seed")
    is_seq = isinstance(data, (list, tuple))
    arrays = [np.asarray(a) for a in data] if is_seq else [np.asarray(data)]
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise ValidationError("all bootstrap inputs need the same number of rows")

    def take(idx):
        parts = [a[idx] for a in arrays]
        return parts if is_seq else parts[0]

    point = np.asarray(statistic(take(np.arange(n))), dtype=float)

    def one(r):
        idx = replicate_rng(seed, r).integers(0, n, size=n)
        try:
            with np.errstate(divide="raise", invalid="raise"):
                val = np.asarray(statistic(take(idx)), dtype=float)
        except _DROPPABLE:
            return None
        if not np.all(np.isfinite(val)):
            return None
        return val

    results = parallel_map(one, list(range(B)), threads)
    kept = [v for v in results if v is not None]
    dropped = B - len(kept)
    if dropped > 0.1 * B:
        raise NumericError(f"statistic undefined on {dropped} of {B} bootstrap resamples")
    reps = np.array(kept)
    se = reps.std(axis=0, ddof=1)
    if point.ndim == 0:
        return BootstrapResult(reps, float(se), float(point), dropped)
    return BootstrapResult(reps, se, point, dropped)

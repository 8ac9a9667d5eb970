"""Partial identification and sensitivity analysis: worst-case bounds,
survivor-effect bounds, Rosenbaum-type p-values and sensitivity-parameter
adjusted estimators of the average causal effect."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .numerics import bootstrap, logistic_fit, ols, with_intercept
from .reporting import EstimateReport, ValidationError, as_binary, as_matrix, parallel_map, z_quantile


@dataclass
class BoundsReport:
    lower: float
    upper: float
    se_lower: float | None = None
    se_upper: float | None = None
    ci: tuple | None = None
    alpha: float = 0.05
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self):
        return self.upper - self.lower

    def as_dict(self) -> dict:
        out = {"lower": self.lower, "upper": self.upper}
        if self.se_lower is not None:
            out.update(se_lower=self.se_lower, se_upper=self.se_upper)
        if self.ci is not None:
            out["ci"] = list(self.ci)
        out["diagnostics"] = self.diagnostics
        return out


@dataclass
class SensitivityCurve:
    grid: np.ndarray
    values: np.ndarray
    label: str = "p_value"
    threshold: float | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValidationError("sensitivity grid must be strictly increasing")

    def rows(self):
        return list(zip(self.grid.tolist(), self.values.tolist()))


# ---- worst-case bounds ------------------------------------------------------

def manski_bounds(z, y, y_min: float, y_max: float) -> BoundsReport:
    """Bounds on the average causal effect using only the outcome range."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != z.size:
        raise ValidationError("treatment and outcome lengths differ")
    if not y_min < y_max:
        raise ValidationError("need y_min < y_max")
    if np.any(y < y_min) or np.any(y > y_max):
        raise ValidationError(f"outcomes must lie within [{y_min}, {y_max}]")
    p1 = z.mean()
    p0 = 1 - p1
    m1 = y[z == 1].mean() if p1 > 0 else 0.0
    m0 = y[z == 0].mean() if p0 > 0 else 0.0
    lower = m1 * p1 + y_min * p0 - y_max * p1 - m0 * p0
    upper = m1 * p1 + y_max * p0 - y_min * p1 - m0 * p0
    return BoundsReport(float(lower), float(upper), diagnostics={"pr_treated": float(p1)})


# ---- truncation by death ----------------------------------------------------

@dataclass(frozen=True)
class SurvivorCounts:
    """Per arm: survivors with Y=1, survivors with Y=0, non-survivors."""

    t_y1: int
    t_y0: int
    t_dead: int
    c_y1: int
    c_y0: int
    c_dead: int

    def units(self):
        """Unit-level arrays (z, m, y) with y = 0 for non-survivors."""
        parts = [(1, 1, 1, self.t_y1), (1, 1, 0, self.t_y0), (1, 0, 0, self.t_dead),
                 (0, 1, 1, self.c_y1), (0, 1, 0, self.c_y0), (0, 0, 0, self.c_dead)]
        cols = [np.repeat([p[k] for p in parts], [p[3] for p in parts]).astype(float) for k in range(3)]
        return cols[0], cols[1], cols[2]


def _survivor_point(z, m, y, check=True):
    n1, n0 = z.sum(), (1 - z).sum()
    if n1 == 0 or n0 == 0:
        raise ValidationError("both arms need units")
    s1, s0 = np.sum(z * m) / n1, np.sum((1 - z) * m) / n0
    if check and s1 < s0:
        raise ValidationError("survival is lower under treatment, which contradicts monotonicity "
                              f"(pr(M=1|Z=1)={s1:.4f} < pr(M=1|Z=0)={s0:.4f})")
    pi11, pi00, pi10 = s0, 1 - s1, s1 - s0
    if pi11 <= 0:
        raise ValidationError("no always-survivors: the survivor effect is undefined")
    ey1 = np.sum(z * m * y) / np.sum(z * m)
    ey0 = np.sum((1 - z) * m * y) / np.sum((1 - z) * m)
    # a binary outcome's conditional mean also lies in [0, 1]; plug-in values can leave it
    lo1 = max(((pi11 + pi10) * ey1 - pi10) / pi11, 0.0)
    hi1 = min((pi11 + pi10) * ey1 / pi11, 1.0)
    return {"pi": (float(pi11), float(pi10), float(pi00)), "ey1_bounds": (float(lo1), float(hi1)),
            "ey0": float(ey0), "lower": float(lo1 - ey0), "upper": float(hi1 - ey0)}


def survivor_bounds(counts, B: int = 500, seed=None, alpha: float = 0.05, threads=None) -> BoundsReport:
    """Bounds on the survivor average causal effect for a binary outcome under
    monotone survival, with the Imbens-Manski interval from bootstrap SEs of the
    two bounds (units resampled jointly).

    ``counts`` is a SurvivorCounts or a 6-tuple in its field order.
    """
    if not isinstance(counts, SurvivorCounts):
        counts = SurvivorCounts(*[int(c) for c in counts])
    z, m, y = counts.units()
    pt = _survivor_point(z, m, y)
    rep = BoundsReport(pt["lower"], pt["upper"], alpha=alpha,
                       diagnostics={"pi_11": pt["pi"][0], "pi_10": pt["pi"][1], "pi_00": pt["pi"][2],
                                    "ey1_given_11_bounds": list(pt["ey1_bounds"]),
                                    "ey0_given_11": pt["ey0"]})
    if seed is not None:
        def stat(d):
            r = _survivor_point(d[0], d[1], d[2], check=False)
            return [r["lower"], r["upper"]]
        boot = bootstrap([z, m, y], stat, B, seed, threads)
        q = z_quantile(1 - alpha)
        rep.se_lower, rep.se_upper = float(boot.se[0]), float(boot.se[1])
        rep.ci = (rep.lower - q * rep.se_lower, rep.upper + q * rep.se_upper)
        rep.diagnostics["bootstrap_B"] = B
    return rep


# ---- Rosenbaum-type sensitivity ---------------------------------------------

ROSENBAUM_STATS = ("pair_t_abs", "signed_rank", "sign")


def _pair_scores(diffs, stat):
    d = np.asarray(diffs, dtype=float).ravel()
    d = d[d != 0]
    if d.size == 0:
        raise ValidationError("all pair differences are zero")
    a = np.abs(d)
    if stat == "pair_t_abs":
        q = a
    elif stat == "signed_rank":
        q = stats.rankdata(a)
    elif stat == "sign":
        q = np.ones_like(a)
    else:
        raise ValidationError(f"statistic must be one of {ROSENBAUM_STATS}")
    return (d > 0).astype(float), q


def rosenbaum_pvalue(pair_diffs, gamma: float = 1.0, stat: str = "pair_t_abs") -> float:
    """Upper bound on the one-sided p-value for T = sum S_i q_i when the
    within-pair odds ratio of treatment is at most gamma (normal approximation)."""
    if not gamma >= 1:
        raise ValidationError("gamma must be at least 1")
    s, q = _pair_scores(pair_diffs, stat)
    T = float(s @ q)
    p = gamma / (1 + gamma)
    mean = p * q.sum()
    var = gamma / (1 + gamma) ** 2 * np.sum(q**2)
    return float(stats.norm.sf((T - mean) / np.sqrt(var)))


def gamma_curve(pair_diffs, grid, stat: str = "pair_t_abs", alpha: float = 0.05,
                threads=None) -> tuple:
    """p-values over a gamma grid and gamma*, the largest grid value with p < alpha
    (None when even gamma = grid[0] does not reject)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid < 1):
        raise ValidationError("gamma grid must be nonempty with values >= 1")
    pv = parallel_map(lambda g: rosenbaum_pvalue(pair_diffs, g, stat), list(grid), threads)
    curve = SensitivityCurve(grid, pv, "p_value", alpha)
    below = np.flatnonzero(curve.values < alpha)
    gstar = float(grid[below[-1]]) if below.size else None
    return curve, gstar


def gamma_star(pair_diffs, stat: str = "pair_t_abs", alpha: float = 0.05, upper: float = 1e3):
    """Gamma at which the worst-case p-value crosses alpha (root of p - alpha)."""
    f = lambda g: rosenbaum_pvalue(pair_diffs, g, stat) - alpha  # noqa: E731
    if f(1.0) >= 0:
        return None
    if f(upper) < 0:
        return float("inf")
    return float(brentq(f, 1.0, upper, xtol=1e-10))


# ---- sensitivity parameters for the average causal effect --------------------

def epsilon_components(z, y, X, eps1: float = 1.0, eps0: float = 1.0, trunc=(0.0, 1.0),
                       dr_sign: int = -1) -> dict:
    """Outcome-regression, HT, Hajek and doubly robust estimates under the
    mean-ratio sensitivity parameters eps1 and eps0.

    ``dr_sign=-1`` is the augmentation that reduces to the usual doubly robust
    estimator at eps1 = eps0 = 1; ``dr_sign=+1`` reproduces a published
    variant with the opposite sign on the augmentation term.
    """
    X1 = with_intercept(X)
    e = logistic_fit(X1, z).fitted_probabilities
    e = np.minimum(np.maximum(e, trunc[0]), trunc[1])
    mu1 = X1 @ ols(X1[z == 1], y[z == 1]).coefficients
    mu0 = X1 @ ols(X1[z == 0], y[z == 0]).coefficients
    reg = (np.mean(z * y) + np.mean((1 - z) * mu1 / eps1)
           - np.mean(z * mu0 * eps0) - np.mean((1 - z) * y))
    w1 = e + (1 - e) / eps1
    w0 = e * eps0 + (1 - e)
    ht = np.mean(z * y * w1 / e) - np.mean((1 - z) * y * w0 / (1 - e))
    hajek = (np.mean(z * y * w1 / e) / np.mean(z / e)
             - np.mean((1 - z) * y * w0 / (1 - e)) / np.mean((1 - z) / (1 - e)))
    aug = mu1 / e / eps1 + mu0 * eps0 / (1 - e)
    dr = ht + dr_sign * np.mean((z - e) * aug)
    return {"reg": float(reg), "ht": float(ht), "hajek": float(hajek), "dr": float(dr)}


def epsilon_sensitivity(z, y, X, eps1: float = 1.0, eps0: float = 1.0, estimator: str = "dr",
                        trunc=(0.0, 1.0), dr_sign: int = -1, B: int = 200, seed=None,
                        alpha: float = 0.05, threads=None) -> EstimateReport:
    """Sensitivity-adjusted estimate of the average causal effect with a
    bootstrap SE that refits both nuisance models (skipped without a seed)."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    X = as_matrix(X, z.size)
    if not (eps1 > 0 and eps0 > 0):
        raise ValidationError("sensitivity parameters must be positive")
    if estimator not in ("reg", "ht", "hajek", "dr"):
        raise ValidationError("estimator must be one of reg, ht, hajek, dr")

    def stat(d):
        return epsilon_components(d[0], d[1], d[2], eps1, eps0, trunc, dr_sign)[estimator]
    est = stat([z, y, X])
    se = float("nan")
    diag = {"eps1": eps1, "eps0": eps0}
    if seed is not None:
        se = bootstrap([z, y, X], stat, B, seed, threads).se
        diag["bootstrap_B"] = B
    return EstimateReport.wald("ATE", est, se, alpha, method=f"epsilon_{estimator}", n=z.size,
                               diagnostics=diag)


def epsilon_grid(z, y, X, eps1_grid, eps0_grid, estimator: str = "dr", trunc=(0.0, 1.0),
                 dr_sign: int = -1) -> np.ndarray:
    """Matrix of point estimates with rows indexed by eps1 and columns by eps0."""
    z = as_binary(z)
    y = np.asarray(y, dtype=float).ravel()
    X = as_matrix(X, z.size)
    out = np.empty((len(eps1_grid), len(eps0_grid)))
    for i, e1 in enumerate(eps1_grid):
        for j, e0 in enumerate(eps0_grid):
            out[i, j] = epsilon_components(z, y, X, e1, e0, trunc, dr_sign)[estimator]
    return out

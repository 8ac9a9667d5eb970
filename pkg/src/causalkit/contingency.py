"""Two-by-two tables: risk measures, Simpson decompositions, exact tests, E-values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .reporting import ValidationError, z_quantile

# tables up to this size use exact rational arithmetic for the hypergeometric pmf
EXACT_LIMIT = 2000


@dataclass(frozen=True)
class TwoByTwo:
    """Counts with rows = treatment (1, 0) and columns = outcome (1, 0)."""

    n11: int
    n10: int
    n01: int
    n00: int

    def __post_init__(self):
        for v in (self.n11, self.n10, self.n01, self.n00):
            if v < 0:
                raise ValidationError("counts must be nonnegative")
        if self.n <= 0:
            raise ValidationError("table total must be positive")

    @property
    def n1(self):
        return self.n11 + self.n10

    @property
    def n0(self):
        return self.n01 + self.n00

    @property
    def n(self):
        return self.n11 + self.n10 + self.n01 + self.n00

    @property
    def p1(self):
        return self.n11 / self.n1 if self.n1 else math.nan

    @property
    def p0(self):
        return self.n01 / self.n0 if self.n0 else math.nan

    def __add__(self, other):
        return TwoByTwo(self.n11 + other.n11, self.n10 + other.n10,
                        self.n01 + other.n01, self.n00 + other.n00)


@dataclass
class RiskMeasures:
    rd: float
    rr: float
    or_: float
    se_rd: float
    se_log_rr: float
    se_log_or: float
    ci_rd: tuple
    ci_rr: tuple
    ci_or: tuple
    alpha: float = 0.05
    flags: tuple = ()


def _safe_div(a, b):
    return a / b if b != 0 else math.nan


def risk_measures(t: TwoByTwo, alpha: float = 0.05) -> RiskMeasures:
    """Risk difference, risk ratio and odds ratio with delta-method intervals
    (log scale for the two ratios)."""
    if t.n1 == 0 or t.n0 == 0:
        raise ValidationError("both treatment rows need at least one unit")
    p1, p0 = t.p1, t.p0
    rd = p1 - p0
    rr = _safe_div(p1, p0)
    or_ = _safe_div(t.n11 * t.n00, t.n10 * t.n01)
    flags = []
    q = z_quantile(1 - alpha / 2)
    se_rd = math.sqrt(p1 * (1 - p1) / t.n1 + p0 * (1 - p0) / t.n0)
    ci_rd = (rd - q * se_rd, rd + q * se_rd)
    if min(t.n11, t.n01) > 0:
        se_log_rr = math.sqrt((1 - p1) / (t.n1 * p1) + (1 - p0) / (t.n0 * p0))
        ci_rr = (rr * math.exp(-q * se_log_rr), rr * math.exp(q * se_log_rr))
    else:
        se_log_rr, ci_rr = math.nan, (math.nan, math.nan)
        flags.append("zero cell: risk ratio standard error undefined")
    if min(t.n11, t.n10, t.n01, t.n00) > 0:
        se_log_or = math.sqrt(1 / t.n11 + 1 / t.n10 + 1 / t.n01 + 1 / t.n00)
        ci_or = (or_ * math.exp(-q * se_log_or), or_ * math.exp(q * se_log_or))
    else:
        se_log_or, ci_or = math.nan, (math.nan, math.nan)
        flags.append("zero cell: odds ratio standard error undefined")
    return RiskMeasures(rd, rr, or_, se_rd, se_log_rr, se_log_or, ci_rd, ci_rr, ci_or,
                        alpha, tuple(flags))


@dataclass
class SimpsonResult:
    strata: list
    pooled: RiskMeasures
    pooled_table: TwoByTwo
    flip: bool
    message: str


def simpson_decompose(strata, alpha: float = 0.05) -> SimpsonResult:
    """Per-stratum and pooled risk differences; flags a sign reversal."""
    strata = list(strata)
    if len(strata) < 2:
        raise ValidationError("need at least two strata")
    per = [risk_measures(t, alpha) for t in strata]
    pooled_t = strata[0]
    for t in strata[1:]:
        pooled_t = pooled_t + t
    pooled = risk_measures(pooled_t, alpha)
    signs = {int(np.sign(m.rd)) for m in per}
    flip = len(signs) == 1 and 0 not in signs and int(np.sign(pooled.rd)) == -signs.pop()
    msg = ("pooled association reverses the common stratum-level sign" if flip
           else "no sign reversal")
    return SimpsonResult(per, pooled, pooled_t, flip, msg)


def _hypergeom_support(t: TwoByTwo):
    n1, n = t.n1, t.n
    c1 = t.n11 + t.n01
    lo = max(0, n1 - (n - c1))
    hi = min(n1, c1)
    return n1, c1, n, lo, hi


def hypergeom_pmf(t: TwoByTwo) -> tuple:
    """Support of n11 given both margins and its pmf."""
    n1, c1, n, lo, hi = _hypergeom_support(t)
    ks = np.arange(lo, hi + 1)
    if n <= EXACT_LIMIT:
        denom = math.comb(n, n1)
        pmf = np.array([float(Fraction(math.comb(c1, k) * math.comb(n - c1, n1 - k), denom))
                        for k in ks])
    else:
        # log pmf from the ratio recurrence p(k+1)/p(k), anchored at the mode by
        # log-gamma; normalizing removes the anchor's rounding error
        k = ks[:-1].astype(float)
        step = (np.log(c1 - k) + np.log(n1 - k) - np.log(k + 1) - np.log(n - c1 - n1 + k + 1))
        logp = np.concatenate([[0.0], np.cumsum(step)])
        mode = int(np.argmax(logp))
        km = ks[mode]
        anchor = (gammaln(c1 + 1) - gammaln(km + 1) - gammaln(c1 - km + 1)
                  + gammaln(n - c1 + 1) - gammaln(n1 - km + 1) - gammaln(n - c1 - n1 + km + 1)
                  - gammaln(n + 1) + gammaln(n1 + 1) + gammaln(n - n1 + 1))
        pmf = np.exp(logp - logp[mode] + anchor)
        pmf /= pmf.sum()
    return ks, pmf


def hypergeom_exact(t: TwoByTwo, sided: str = "one") -> float:
    """Exact test of no association conditional on both margins.

    one-sided: pr(n11 >= observed); two-sided: total probability of tables
    no more likely than the observed one.
    """
    n1, c1, n, lo, hi = _hypergeom_support(t)
    if sided == "one":
        if n <= EXACT_LIMIT:
            denom = math.comb(n, n1)
            num = sum(math.comb(c1, k) * math.comb(n - c1, n1 - k) for k in range(t.n11, hi + 1))
            return float(Fraction(num, denom))
        ks, pmf = hypergeom_pmf(t)
        return float(min(1.0, pmf[ks >= t.n11].sum()))
    if sided == "two":
        ks, pmf = hypergeom_pmf(t)
        obs = pmf[ks == t.n11][0]
        return float(min(1.0, pmf[pmf <= obs * (1 + 1e-7)].sum()))
    raise ValidationError("sided must be 'one' or 'two'")


def evalue(rr_obs: float) -> float:
    """Smallest joint confounder risk ratio that could explain away rr_obs."""
    if not rr_obs > 0:
        raise ValidationError("risk ratio must be positive")
    rr = rr_obs if rr_obs >= 1 else 1.0 / rr_obs
    return rr + math.sqrt(rr * (rr - 1.0))


def cornfield_bounding_factor(rr_zu: float, rr_uy: float) -> float:
    """Maximal confounding bias factor w1 w2 / (w1 + w2 - 1)."""
    if not (rr_zu > 1 and rr_uy > 1):
        raise ValidationError("both risk ratios must exceed 1")
    return rr_zu * rr_uy / (rr_zu + rr_uy - 1.0)


def evalue_report(point_rr: float, ci_bound_rr: float) -> tuple:
    """E-values for a point estimate and the confidence limit nearer to 1.

    A limit on the other side of 1 from the point estimate gives 1.
    """
    e_point = evalue(point_rr)
    if not ci_bound_rr > 0:
        raise ValidationError("risk ratio must be positive")
    if (point_rr >= 1) != (ci_bound_rr >= 1) and ci_bound_rr != 1:
        return e_point, 1.0
    return e_point, evalue(ci_bound_rr)

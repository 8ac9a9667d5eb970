"""Sharp and fuzzy regression discontinuity by local linear regression with a
user-chosen bandwidth, plus bandwidth sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .iv import tsls
from .numerics import ols, robust_cov
from .reporting import EstimateReport, NumericError, ValidationError, WeakInstrumentError, parallel_map

MIN_SIDE = 4


@dataclass
class RddSpec:
    """Running variable, cutoff and bandwidth (inclusive window |x - x0| <= h)."""

    x: np.ndarray
    cutoff: float
    h: float = np.inf

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        if not self.h > 0:
            raise ValidationError("bandwidth must be positive")

    @property
    def z(self):
        return (self.x >= self.cutoff).astype(float)

    def window(self, h=None) -> np.ndarray:
        h = self.h if h is None else h
        return np.abs(self.x - self.cutoff) <= h

    def design(self, h=None):
        """(window mask, Z, R, L) with R = max(x - x0, 0) and L = min(x - x0, 0)."""
        w = self.window(h)
        c = self.x[w] - self.cutoff
        z = (c >= 0).astype(float)
        n1, n0 = int(z.sum()), int((1 - z).sum())
        if n1 < MIN_SIDE or n0 < MIN_SIDE:
            raise ValidationError(f"bandwidth {self.h if h is None else h} leaves {n0} points below and "
                                  f"{n1} at or above the cutoff; need at least {MIN_SIDE} on each side")
        return w, z, np.maximum(c, 0.0), np.minimum(c, 0.0)


def sharp_rdd(spec: RddSpec, y, alpha: float = 0.05, h=None, hc: str = "HC0") -> EstimateReport:
    """Jump at the cutoff: coefficient of Z in OLS of y on (1, Z, R, L) within
    the window, with a sandwich SE."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.x.size:
        raise ValidationError("outcome and running variable lengths differ")
    w, z, R, L = spec.design(h)
    fit = ols(np.column_stack([np.ones(z.size), z, R, L]), y[w], names=["(intercept)", "z", "R", "L"])
    se = robust_cov(fit, hc).se()[1]
    hh = spec.h if h is None else h
    return EstimateReport.wald("tau(x0)", fit.coefficients[1], se, alpha, method="sharp_rdd",
                               n=int(w.sum()), diagnostics={"h": hh, "hc": hc,
                                                             "n_below": int((1 - z).sum()),
                                                             "n_above": int(z.sum())})


def sharp_rdd_interacted(spec: RddSpec, y, h=None) -> float:
    """Same jump from the parametrization (1, Z, x - x0, Z (x - x0))."""
    y = np.asarray(y, dtype=float).ravel()
    w, z, R, L = spec.design(h)
    c = R + L
    return float(ols(np.column_stack([np.ones(z.size), z, c, z * c]), y[w]).coefficients[1])


def fuzzy_rdd(spec: RddSpec, d, y, alpha: float = 0.05, h=None, hc: str = "HC0") -> EstimateReport:
    """Local complier effect: TSLS of y on (1, d, R, L) with Z instrumenting d."""
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    if not (y.size == d.size == spec.x.size):
        raise ValidationError("treatment, outcome and running variable lengths differ")
    w, z, R, L = spec.design(h)
    RL = np.column_stack([R, L])
    jump_d = ols(np.column_stack([np.ones(z.size), z, RL]), d[w]).coefficients[1]
    if abs(jump_d) < 1e-8:
        raise WeakInstrumentError("treatment probability does not jump at the cutoff")
    rep = tsls(y[w], d[w], z, RL, alpha, hc)[0]
    hh = spec.h if h is None else h
    rep.estimand = "tau_c(x0)"
    rep.method = "fuzzy_rdd"
    rep.diagnostics.update({"h": hh, "first_stage_jump": float(jump_d)})
    return rep


@dataclass
class BandwidthPoint:
    h: float
    report: EstimateReport | None
    error: str | None = None


def bandwidth_sweep(spec: RddSpec, y, grid, d=None, alpha: float = 0.05, hc: str = "HC0",
                    threads=None) -> list:
    """One estimate per bandwidth; failures are recorded and the sweep goes on."""
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValidationError("bandwidth grid must be positive and strictly increasing")

    def one(h):
        try:
            if d is None:
                return BandwidthPoint(float(h), sharp_rdd(spec, y, alpha, h, hc))
            return BandwidthPoint(float(h), fuzzy_rdd(spec, d, y, alpha, h, hc))
        except (ValidationError, NumericError) as exc:
            return BandwidthPoint(float(h), None, str(exc))
    return parallel_map(one, list(grid), threads)

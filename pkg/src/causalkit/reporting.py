"""Shared result containers, error types and small helpers."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats


class CausalkitError(Exception):
    """Base class for all errors raised by the toolkit."""


class ValidationError(CausalkitError, ValueError):
    """Inputs violate a documented precondition."""


class NumericError(CausalkitError, ArithmeticError):
    """A numerical procedure failed (singular design, separation, ...)."""


class SingularDesignError(NumericError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class SeparationError(NumericError):
    pass


class ConvergenceError(NumericError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class WeakInstrumentError(NumericError):
    pass


def z_quantile(p: float) -> float:
    return float(stats.norm.ppf(p))


def two_sided_normal_p(t: float) -> float:
    return float(2.0 * stats.norm.sf(abs(t)))


@dataclass
class EstimateReport:
    """Point estimate with standard error and a Wald interval.

    ``ci`` is ``estimate +/- z_{1-alpha/2} * se`` unless a method supplies
    its own interval.
    """

    estimand: str
    estimate: float
    se: float
    ci: tuple
    method: str = ""
    n: int = 0
    p_value: float | None = None
    alpha: float = 0.05
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def wald(cls, estimand, estimate, se, alpha=0.05, method="", n=0,
             p_value="auto", diagnostics=None):
        estimate = float(estimate)
        se = float(se)
        if np.isfinite(se):
            q = z_quantile(1 - alpha / 2)
            ci = (estimate - q * se, estimate + q * se)
            if p_value == "auto":
                p_value = two_sided_normal_p(estimate / se) if se > 0 else None
        else:
            ci = (math.nan, math.nan)
            if p_value == "auto":
                p_value = None
        if p_value == "auto":
            p_value = None
        return cls(estimand=estimand, estimate=estimate, se=se, ci=ci,
                   method=method, n=int(n), p_value=p_value, alpha=alpha,
                   diagnostics=dict(diagnostics or {}))

    def as_dict(self) -> dict:
        out = {
            "method": self.method,
            "estimand": self.estimand,
            "estimate": self.estimate,
            "se": self.se,
            "ci": [self.ci[0], self.ci[1]],
            "n": self.n,
            "diagnostics": self.diagnostics,
        }
        if self.p_value is not None:
            out["p_value"] = self.p_value
        return out


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("CAUSALKIT_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def parallel_map(fn: Callable[[Any], Any], items: Sequence, threads: int | None = None) -> list:
    """Order-preserving map; results never depend on the worker count."""
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def as_float_array(x, name="input") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def as_binary(z, name="treatment") -> np.ndarray:
    z = np.asarray(z, dtype=float).ravel()
    if not np.all((z == 0) | (z == 1)):
        raise ValidationError(f"{name} must be binary 0/1")
    return z


def as_matrix(X, n=None) -> np.ndarray:
    """Covariates as an (n, p) float matrix; None or empty gives p = 0."""
    if X is None:
        if n is None:
            raise ValidationError("sample size needed for empty covariates")
        return np.zeros((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if n is not None and X.shape[0] != n:
        if X.size == 0:
            return np.zeros((n, 0))
        raise ValidationError(f"covariates have {X.shape[0]} rows, expected {n}")
    return X

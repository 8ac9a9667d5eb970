"""Randomization designs, test statistics and Fisher randomization tests.

Statistics are evaluated on a batch of assignments at once: every statistic
maps an (R, n) 0/1 matrix of assignments to a length-R vector. For matched
pairs the assignment has one entry per pair (1 = the first unit of the pair is
treated, as in the observed data) and statistics see the signed differences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .design_estimators import lin_design, pair_differences
from .numerics import find_rank_deficiency, ols, replicate_rng, robust_cov
from .reporting import NumericError, ValidationError, as_binary, as_matrix, parallel_map

ENUMERATION_CAP = 2**20
AUTO_EXACT_LIMIT = 10**6
MC_CHUNK = 1024
REM_MAX_REJECTIONS = 10**6


# ----------------------------------------------------------------------------
# designs


@dataclass
class AssignmentDesign:
    """One of cre, bernoulli, sre, mpe, rem."""

    kind: str
    n1: int = 0
    n0: int = 0
    p: float = 0.5
    n: int = 0
    strata: np.ndarray | None = None
    stratum_n1: dict = field(default_factory=dict)
    n_pairs: int = 0
    X: np.ndarray | None = None
    threshold: float = math.inf

    @classmethod
    def cre(cls, n1: int, n0: int):
        if n1 < 1 or n0 < 1:
            raise ValidationError("a completely randomized design needs n1, n0 >= 1")
        return cls("cre", n1=int(n1), n0=int(n0), n=int(n1 + n0))

    @classmethod
    def bernoulli(cls, n: int, p: float = 0.5):
        if not 0 < p < 1 or n < 1:
            raise ValidationError("Bernoulli design needs n >= 1 and 0 < p < 1")
        return cls("bernoulli", n=int(n), p=float(p))

    @classmethod
    def sre(cls, strata, n1_per_stratum: dict):
        strata = np.asarray(strata)
        counts = {}
        for lab in np.unique(strata):
            key = lab.item() if hasattr(lab, "item") else lab
            nk = int(np.sum(strata == lab))
            k1 = int(n1_per_stratum[key])
            if not 1 <= k1 < nk:
                raise ValidationError(f"stratum {key} needs 1 <= n1 < {nk}")
            counts[key] = k1
        n1 = sum(counts.values())
        return cls("sre", n1=n1, n0=strata.size - n1, n=strata.size, strata=strata, stratum_n1=counts)

    @classmethod
    def sre_from_data(cls, z, strata):
        z = as_binary(z)
        strata = np.asarray(strata)
        n1 = {}
        for lab in np.unique(strata):
            key = lab.item() if hasattr(lab, "item") else lab
            n1[key] = int(z[strata == lab].sum())
        return cls.sre(strata, n1)

    @classmethod
    def mpe(cls, n_pairs: int):
        if n_pairs < 1:
            raise ValidationError("need at least one pair")
        return cls("mpe", n=int(n_pairs), n_pairs=int(n_pairs))

    @classmethod
    def rem(cls, n1: int, n0: int, X, threshold: float):
        if not threshold > 0:
            raise ValidationError("rerandomization threshold must be positive")
        X = as_matrix(X, n1 + n0)
        _mahalanobis_factor(X, n1, n0)  # validates the covariance
        return cls("rem", n1=int(n1), n0=int(n0), n=int(n1 + n0), X=X, threshold=float(threshold))

    def support_size(self) -> int:
        if self.kind in ("cre", "rem"):
            return math.comb(self.n, self.n1)
        if self.kind == "bernoulli":
            return 2**self.n
        if self.kind == "mpe":
            return 2**self.n_pairs
        if self.kind == "sre":
            total = 1
            for lab, k1 in self.stratum_n1.items():
                total *= math.comb(int(np.sum(self.strata == lab)), k1)
            return total
        raise ValidationError(f"unknown design kind {self.kind}")

    def expected_z(self) -> np.ndarray:
        """pr(Z_i = 1) under the design (ignoring the rerandomization filter)."""
        if self.kind in ("cre", "rem"):
            return np.full(self.n, self.n1 / self.n)
        if self.kind == "bernoulli":
            return np.full(self.n, self.p)
        if self.kind == "mpe":
            return np.full(self.n_pairs, 0.5)
        e = np.empty(self.n)
        for lab, k1 in self.stratum_n1.items():
            sel = self.strata == lab
            e[sel] = k1 / sel.sum()
        return e


# ----------------------------------------------------------------------------
# Mahalanobis balance


def _mahalanobis_factor(X, n1, n0):
    n = n1 + n0
    Xc = X - X.mean(axis=0)
    bad = find_rank_deficiency(np.column_stack([np.ones(n), X]),
                               ["(intercept)"] + [f"x{j}" for j in range(X.shape[1])])
    if bad is not None:
        raise ValidationError(f"covariate covariance is singular; drop column '{bad}'")
    S = Xc.T @ Xc / (n - 1)
    return np.linalg.inv(n / (n1 * n0) * S)


def _mahalanobis_batch(Z, X, n1, n0, inv):
    tx = Z @ X / n1 - (1 - Z) @ X / n0
    return np.einsum("ij,jk,ik->i", tx, inv, tx)


def mahalanobis(z, X) -> float:
    """M = tau_X' {n/(n1 n0) S_X^2}^{-1} tau_X for the covariate mean difference."""
    z = as_binary(z)
    X = as_matrix(X, z.size)
    n1, n0 = int(z.sum()), int((1 - z).sum())
    inv = _mahalanobis_factor(X, n1, n0)
    return float(_mahalanobis_batch(z[None, :], X, n1, n0, inv)[0])


# ----------------------------------------------------------------------------
# enumeration and sampling


def _cre_matrix(n, n1):
    M = math.comb(n, n1)
    out = np.zeros((M, n), dtype=np.int8)
    for r, idx in enumerate(itertools.combinations(range(n), n1)):
        out[r, list(idx)] = 1
    return out


def _binary_matrix(m):
    codes = np.arange(2**m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def assignment_matrix(design: AssignmentDesign, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All assignments of the design, one per row."""
    size = design.support_size()
    if size > cap:
        raise ValidationError(f"design has {size} assignments (cap {cap}); use Monte Carlo")
    k = design.kind
    if k == "cre":
        return _cre_matrix(design.n, design.n1)
    if k == "rem":
        Z = _cre_matrix(design.n, design.n1)
        inv = _mahalanobis_factor(design.X, design.n1, design.n0)
        keep = _mahalanobis_batch(Z.astype(float), design.X, design.n1, design.n0, inv) <= design.threshold
        return Z[keep]
    if k in ("bernoulli", "mpe"):
        return _binary_matrix(design.n)
    # stratified: product of per-stratum enumerations
    blocks = []
    for lab, k1 in design.stratum_n1.items():
        idx = np.flatnonzero(design.strata == lab)
        blocks.append((idx, _cre_matrix(idx.size, k1)))
    out = np.zeros((size, design.n), dtype=np.int8)
    for r, combo in enumerate(itertools.product(*[range(b[1].shape[0]) for b in blocks])):
        for (idx, mat), c in zip(blocks, combo):
            out[r, idx] = mat[c]
    return out


def enumerate_assignments(design: AssignmentDesign, cap: int = ENUMERATION_CAP):
    """Iterate over all assignment vectors of the design."""
    yield from assignment_matrix(design, cap)


def _sample_block(design: AssignmentDesign, R: int, rng: np.random.Generator) -> np.ndarray:
    k = design.kind
    if k in ("cre", "rem"):
        ranks = rng.random((R, design.n)).argsort(axis=1).argsort(axis=1)
        return (ranks < design.n1).astype(np.int8)
    if k == "bernoulli":
        return (rng.random((R, design.n)) < design.p).astype(np.int8)
    if k == "mpe":
        return rng.integers(0, 2, size=(R, design.n_pairs), dtype=np.int8)
    out = np.zeros((R, design.n), dtype=np.int8)
    for lab, k1 in design.stratum_n1.items():
        idx = np.flatnonzero(design.strata == lab)
        ranks = rng.random((R, idx.size)).argsort(axis=1).argsort(axis=1)
        out[:, idx] = ranks < k1
    return out


def sample_matrix(design: AssignmentDesign, R: int, rng: np.random.Generator) -> np.ndarray:
    """R independent draws from the design."""
    if design.kind != "rem":
        return _sample_block(design, R, rng)
    inv = _mahalanobis_factor(design.X, design.n1, design.n0)
    got, rejected = [], 0
    need = R
    while need > 0:
        batch = _sample_block(design, max(64, 2 * need), rng)
        ok = _mahalanobis_batch(batch.astype(float), design.X, design.n1, design.n0, inv) <= design.threshold
        rejected += int((~ok).sum())
        acc = batch[ok][:need]
        got.append(acc)
        need -= acc.shape[0]
        if need > 0 and rejected > REM_MAX_REJECTIONS:
            raise NumericError(f"rerandomization rejected more than {REM_MAX_REJECTIONS} draws; "
                               "threshold too small")
    return np.concatenate(got, axis=0)


def sample_assignment(design: AssignmentDesign, rng: np.random.Generator) -> np.ndarray:
    """One draw from the design (rerandomization accepts when M <= a)."""
    return sample_matrix(design, 1, rng)[0]


# ----------------------------------------------------------------------------
# data and statistics


@dataclass
class FRTData:
    """Observed data for a randomization test.

    Unit-level designs use ``z``, ``y`` and optionally ``X`` and ``strata``.
    Matched pairs use ``d`` (first-minus-second unit outcome differences, with
    ``z`` = 1 when the first unit was treated) and optional ``dX``.
    """

    z: np.ndarray
    y: np.ndarray | None = None
    X: np.ndarray | None = None
    strata: np.ndarray | None = None
    d: np.ndarray | None = None
    dX: np.ndarray | None = None
    dropped_pairs: int = 0

    @property
    def paired(self) -> bool:
        return self.d is not None

    @classmethod
    def units(cls, z, y, X=None, strata=None):
        z = as_binary(z).astype(np.int8)
        y = np.asarray(y, dtype=float).ravel()
        if y.size != z.size:
            raise ValidationError("treatment and outcome lengths differ")
        X = None if X is None else as_matrix(X, z.size)
        strata = None if strata is None else np.asarray(strata)
        return cls(z=z, y=y, X=X, strata=strata)

    @classmethod
    def pairs(cls, diffs, diff_X=None, drop_zero: bool | None = None):
        """Treated-minus-control differences. Pairs with a zero outcome
        difference carry no information under the sharp null; they are dropped
        unless covariate differences are supplied (then they still inform the
        covariate slope)."""
        d = np.asarray(diffs, dtype=float).ravel()
        dX = None if diff_X is None else as_matrix(diff_X, d.size)
        if drop_zero is None:
            drop_zero = dX is None
        dropped = 0
        if drop_zero:
            keep = d != 0
            dropped = int((~keep).sum())
            d = d[keep]
            dX = None if dX is None else dX[keep]
        if d.size == 0:
            raise ValidationError("no informative pairs")
        return cls(z=np.ones(d.size, dtype=np.int8), d=d, dX=dX, dropped_pairs=dropped)

    @classmethod
    def pairs_from_units(cls, pair_id, z, y, X=None, drop_zero=None):
        d, dX = pair_differences(pair_id, z, y, X)
        return cls.pairs(d, dX if dX.shape[1] else None, drop_zero)


@dataclass(frozen=True)
class TestStatistic:
    """A test statistic identifier plus options.

    ids: diff_means, student_t, wilcoxon, ks, strat_diff, strat_t,
    van_elteren, aligned_rank, strat_ks, pair_mean, pair_t, sign_rank, sign,
    mcnemar, butler_ks, lin_t, regression_coef, pseudo_outcome.

    options: student_t variant "unequal"|"equal"; van_elteren variant 1|2;
    strat_ks variant "S"|"max"|"pooled"; regression_coef model
    "neyman"|"fisher"|"lin" and output "coef"|"t"|"t_ehw"; pseudo_outcome
    ``inner`` (another TestStatistic).
    """

    id: str
    variant: object = None
    model: str = "fisher"
    output: str = "coef"
    inner: "TestStatistic | None" = None
    hc: str = "HC2"

    __test__ = False  # not a pytest class


UNIT_STATS = {"diff_means", "student_t", "wilcoxon", "ks", "lin_t", "regression_coef"}
STRATA_STATS = {"strat_diff", "strat_t", "van_elteren", "aligned_rank", "strat_ks"}
PAIR_STATS = {"pair_mean", "pair_t", "sign_rank", "sign", "mcnemar", "butler_ks"}


def _as_stat(stat) -> TestStatistic:
    return stat if isinstance(stat, TestStatistic) else TestStatistic(str(stat))


def _n_arms(Z):
    n1 = Z.sum(axis=1).astype(float)
    n0 = Z.shape[1] - n1
    return n1, n0


def _diff_means(Z, y):
    n1, n0 = _n_arms(Z)
    s1 = Z @ y
    return s1 / n1 - (y.sum() - s1) / n0


def _student_t(Z, y, variant="unequal"):
    n1, n0 = _n_arms(Z)
    s1, q1 = Z @ y, Z @ (y * y)
    s0, q0 = y.sum() - s1, (y * y).sum() - q1
    m1, m0 = s1 / n1, s0 / n0
    ss1 = q1 - n1 * m1**2
    ss0 = q0 - n0 * m0**2
    if variant == "equal":
        v = (ss1 + ss0) / (n1 + n0 - 2) * (1 / n1 + 1 / n0)
    else:
        v = ss1 / (n1 - 1) / n1 + ss0 / (n0 - 1) / n0
    if np.any(v <= 0):
        raise NumericError("studentized statistic has zero variance")
    return (m1 - m0) / np.sqrt(v)


def _cum_ks(Z, y, weights):
    """max_y |sum_i a_i 1(y_i <= y)| with unit weights a = weights(Z)."""
    order = np.argsort(y, kind="mergesort")
    ys = y[order]
    ends = np.flatnonzero(np.r_[ys[1:] != ys[:-1], True])
    a = weights[:, order]
    return np.max(np.abs(np.cumsum(a, axis=1)[:, ends]), axis=1)


def _ks(Z, y):
    n1, n0 = _n_arms(Z)
    Zf = Z.astype(float)
    w = Zf / n1[:, None] - (1 - Zf) / n0[:, None]
    return _cum_ks(Z, y, w)


def _regression_stat(Z, y, X, model, output, hc):
    out = np.empty(Z.shape[0])
    Xm = np.zeros((y.size, 0)) if X is None else X
    for r, z in enumerate(Z):
        z = z.astype(float)
        if model == "neyman":
            D = np.column_stack([np.ones(z.size), z])
        elif model == "fisher":
            D = np.column_stack([np.ones(z.size), z, Xm - Xm.mean(axis=0)])
        elif model == "lin":
            D = lin_design(z, Xm)[0]
        else:
            raise ValidationError(f"unknown regression model '{model}'")
        fit = ols(D, y)
        b = fit.coefficients[1]
        if output == "coef":
            out[r] = b
        elif output == "t":
            out[r] = b / np.sqrt(fit.model_cov[1, 1])
        elif output == "t_ehw":
            out[r] = b / np.sqrt(robust_cov(fit, hc).matrix[1, 1])
        else:
            raise ValidationError(f"unknown regression output '{output}'")
    return out


def _strata_groups(strata):
    labels, codes = np.unique(strata, return_inverse=True)
    return [np.flatnonzero(codes == k) for k in range(labels.size)]


def _strat_diff(Z, y, groups, studentize=False):
    n = y.size
    est = np.zeros(Z.shape[0])
    var = np.zeros(Z.shape[0])
    for idx in groups:
        Zk, yk = Z[:, idx], y[idx]
        pi = idx.size / n
        est += pi * _diff_means(Zk, yk)
        if studentize:
            n1, n0 = _n_arms(Zk)
            s1, q1 = Zk @ yk, Zk @ (yk * yk)
            s0, q0 = yk.sum() - s1, (yk * yk).sum() - q1
            v1 = (q1 - s1**2 / n1) / (n1 - 1)
            v0 = (q0 - s0**2 / n0) / (n0 - 1)
            var += pi**2 * (v1 / n1 + v0 / n0)
    if studentize:
        if np.any(~(var > 0)):
            raise NumericError("stratified studentized statistic needs 2 units per arm and stratum")
        return est / np.sqrt(var)
    return est


def _van_elteren(Z, y, groups, variant=1):
    total = np.zeros(Z.shape[0])
    for idx in groups:
        Zk = Z[:, idx]
        ranks = rankdata(y[idx])
        n1, n0 = _n_arms(Zk)
        c = 1.0 / (n1 * n0) if variant in (1, "1", None) else 1.0 / (idx.size + 1)
        total += c * (Zk @ ranks)
    return total


def _aligned_ranks(y, groups):
    yt = y.copy()
    for idx in groups:
        yt[idx] = y[idx] - y[idx].mean()
    return rankdata(yt)


def _strat_ks(Z, y, groups, variant="S"):
    n = y.size
    if variant == "pooled":
        w = np.zeros(Z.shape, dtype=float)
        for idx in groups:
            Zk = Z[:, idx].astype(float)
            n1, n0 = _n_arms(Z[:, idx])
            w[:, idx] = idx.size / n * (Zk / n1[:, None] - (1 - Zk) / n0[:, None])
        return _cum_ks(Z, y, w)
    parts = []
    for idx in groups:
        n1, n0 = _n_arms(Z[:, idx])
        parts.append(np.sqrt(n1 * n0 / idx.size) * _ks(Z[:, idx], y[idx]))
    parts = np.array(parts)
    if variant == "S":
        return parts.sum(axis=0)
    if variant == "max":
        return parts.max(axis=0)
    raise ValidationError("strat_ks variant must be 'S', 'max' or 'pooled'")


def _signed(Z, d):
    return (2 * Z.astype(float) - 1) * d


def _pair_t(Z, d, dX):
    tau = _signed(Z, d)
    m = tau.shape[1]
    if dX is None:
        mean = tau.mean(axis=1)
        sd = tau.std(axis=1, ddof=1)
        if np.any(sd == 0):
            raise NumericError("paired t statistic has zero variance")
        return mean / (sd / np.sqrt(m))
    out = np.empty(Z.shape[0])
    for r in range(Z.shape[0]):
        s = 2 * Z[r].astype(float) - 1
        fit = ols(np.column_stack([np.ones(m), s[:, None] * dX]), tau[r])
        out[r] = fit.coefficients[0] / np.sqrt(fit.model_cov[0, 0])
    return out


def _sign_rank(Z, d):
    tau = _signed(Z, d)
    ranks = rankdata(np.abs(d))
    return (tau > 0).astype(float) @ ranks


def _butler_ks(Z, d):
    tau = _signed(Z, d)
    m = d.size
    grid = np.unique(np.r_[np.abs(d), -np.abs(d)])
    out = np.empty(Z.shape[0])
    step = max(1, 2**22 // max(1, m * grid.size))
    for start in range(0, Z.shape[0], step):
        t = tau[start:start + step]
        below = (t[:, :, None] <= grid[None, None, :]).sum(axis=1)
        strictly_neg = (t[:, :, None] < -grid[None, None, :]).sum(axis=1)
        out[start:start + step] = np.max(np.abs(below + strictly_neg - m), axis=1) / m
    return out


def _evaluate(stat: TestStatistic, Z: np.ndarray, data: FRTData) -> np.ndarray:
    sid = stat.id
    if sid in PAIR_STATS:
        if not data.paired:
            raise ValidationError(f"statistic '{sid}' needs matched-pair data")
        d = data.d
        if sid == "pair_mean":
            return _signed(Z, d).mean(axis=1)
        if sid == "pair_t":
            return _pair_t(Z, d, data.dX)
        if sid == "sign_rank":
            return _sign_rank(Z, d)
        if sid == "sign":
            return (_signed(Z, d) > 0).sum(axis=1).astype(float)
        if sid == "mcnemar":
            if not np.all(np.isin(np.abs(d), (0.0, 1.0))):
                raise ValidationError("McNemar's statistic needs a binary outcome")
            return (_signed(Z, d) == 1).sum(axis=1).astype(float)
        return _butler_ks(Z, d)
    if data.paired:
        raise ValidationError(f"statistic '{sid}' needs unit-level data")
    y = data.y
    if sid in STRATA_STATS:
        if data.strata is None:
            raise ValidationError(f"statistic '{sid}' needs strata")
        groups = _strata_groups(data.strata)
        if sid == "strat_diff":
            return _strat_diff(Z, y, groups)
        if sid == "strat_t":
            return _strat_diff(Z, y, groups, studentize=True)
        if sid == "van_elteren":
            return _van_elteren(Z, y, groups, stat.variant or 1)
        if sid == "aligned_rank":
            return Z @ _aligned_ranks(y, groups)
        return _strat_ks(Z, y, groups, stat.variant or "S")
    if sid == "diff_means":
        return _diff_means(Z, y)
    if sid == "student_t":
        return _student_t(Z, y, stat.variant or "unequal")
    if sid == "wilcoxon":
        return Z @ rankdata(y)
    if sid == "ks":
        return _ks(Z, y)
    if sid == "lin_t":
        if data.X is None:
            raise ValidationError("lin_t needs covariates")
        return _regression_stat(Z, y, data.X, "lin", "t_ehw", stat.hc)
    if sid == "regression_coef":
        return _regression_stat(Z, y, data.X, stat.model, stat.output, stat.hc)
    raise ValidationError(f"unknown statistic '{sid}'")


def _prepare(stat: TestStatistic, data: FRTData) -> tuple[TestStatistic, FRTData]:
    """Resolve pseudo-outcome statistics to their inner statistic applied to
    residuals of y on (1, X); the residuals are fixed under the sharp null."""
    if stat.id != "pseudo_outcome":
        return stat, data
    if stat.inner is None or data.X is None or data.paired:
        raise ValidationError("pseudo_outcome needs an inner statistic and unit-level covariates")
    resid = ols(np.column_stack([np.ones(data.y.size), data.X]), data.y).residuals
    new = FRTData(z=data.z, y=resid, X=data.X, strata=data.strata)
    return _prepare(stat.inner, new)


def compute_statistic(stat, z, data: FRTData) -> float:
    """Value of the statistic at assignment z."""
    stat, data = _prepare(_as_stat(stat), data)
    Z = np.asarray(z, dtype=np.int8).reshape(1, -1)
    return float(_evaluate(stat, Z, data)[0])


def null_center(stat, data: FRTData, design: AssignmentDesign) -> float:
    """Mean of the statistic under the sharp null where it has a simple form;
    0 for centred statistics. KS-type statistics return 0 (two-sided = one-sided)."""
    stat, data = _prepare(_as_stat(stat), data)
    sid = stat.id
    e = design.expected_z()
    if sid == "wilcoxon":
        return float(e @ rankdata(data.y))
    if sid == "aligned_rank":
        return float(e @ _aligned_ranks(data.y, _strata_groups(data.strata)))
    if sid == "van_elteren":
        total = 0.0
        for idx in _strata_groups(data.strata):
            k1 = round(float(e[idx].sum()))
            k0 = idx.size - k1
            c = 1.0 / (k1 * k0) if stat.variant in (1, "1", None) else 1.0 / (idx.size + 1)
            total += c * k1 * (idx.size + 1) / 2
        return total
    if sid == "sign_rank":
        return float(rankdata(np.abs(data.d)).sum() / 2)
    if sid == "sign":
        return float(np.sum(data.d != 0) / 2)
    if sid == "mcnemar":
        return float(np.sum(np.abs(data.d) == 1) / 2)
    return 0.0


# ----------------------------------------------------------------------------
# the test


@dataclass
class RandInferenceResult:
    observed: float
    mode: str  # "exact" or "monte_carlo"
    count: int  # M (exact) or R (Monte Carlo)
    p_hat: float
    p_valid: float
    mc_se: float | None = None
    alternative: str = "greater"
    statistic: str = ""
    replicates: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "statistic": self.statistic,
            "observed": self.observed,
            "mode": self.mode,
            "count": self.count,
            "p_hat": self.p_hat,
            "p_valid": self.p_valid,
            "alternative": self.alternative,
            "diagnostics": self.diagnostics,
        }
        if self.mc_se is not None:
            out["mc_se"] = self.mc_se
        return out


def _extreme(values, observed, center, alternative):
    """Indicator that a replicate is at least as extreme as the observed value
    (with relative slack 1e-9 so that floating ties count)."""
    if alternative == "greater":
        a, b = values, observed
    elif alternative == "less":
        a, b = -values, -observed
    elif alternative == "two-sided":
        a, b = np.abs(values - center), abs(observed - center)
    else:
        raise ValidationError("alternative must be 'greater', 'less' or 'two-sided'")
    return a >= b - 1e-9 * max(1.0, abs(b))


def frt(data: FRTData, design: AssignmentDesign, stat, mode: str = "auto", R: int = 10_000,
        seed: int | None = None, alternative: str = "greater", threads: int | None = None,
        keep_replicates: bool = False, cap: int = ENUMERATION_CAP) -> RandInferenceResult:
    """Fisher randomization test of the sharp null of no effect.

    ``mode``: "exact" enumerates the design, "mc" draws R assignments,
    "auto" enumerates when the design has at most 10^6 assignments.
    """
    stat = _as_stat(stat)
    sid = stat.id if stat.id != "pseudo_outcome" else f"pseudo_outcome({stat.inner.id if stat.inner else ''})"
    inner, prepared = _prepare(stat, data)
    _check_compatible(inner, prepared, design)
    z_obs = prepared.z.reshape(1, -1)
    t_obs = float(_evaluate(inner, z_obs, prepared)[0])
    center = null_center(stat, data, design)
    if mode == "auto":
        mode = "exact" if design.support_size() <= AUTO_EXACT_LIMIT else "mc"
    diag = {}
    if prepared.paired and prepared.dropped_pairs:
        diag["dropped_zero_pairs"] = prepared.dropped_pairs

    if mode == "exact":
        Zall = assignment_matrix(design, cap)
        chunks = [Zall[i:i + 8192] for i in range(0, Zall.shape[0], 8192)]
        vals = np.concatenate(parallel_map(lambda Z: _evaluate(inner, Z, prepared), chunks, threads))
        hits = _extreme(vals, t_obs, center, alternative)
        p = float(hits.mean())
        return RandInferenceResult(t_obs, "exact", vals.size, p, p, None, alternative, sid,
                                   vals if keep_replicates else None, diag)
    if mode not in ("mc", "monte_carlo"):
        raise ValidationError("mode must be 'auto', 'exact' or 'mc'")
    if seed is None:
        raise ValidationError("Monte Carlo randomization tests need a seed")
    if R < 1:
        raise ValidationError("R must be positive")
    sizes = [min(MC_CHUNK, R - s) for s in range(0, R, MC_CHUNK)]

    def run(c):
        Z = sample_matrix(design, sizes[c], replicate_rng(seed, c))
        return _evaluate(inner, Z, prepared)

    vals = np.concatenate(parallel_map(run, list(range(len(sizes))), threads))
    hits = int(_extreme(vals, t_obs, center, alternative).sum())
    p_hat = hits / R
    p_valid = (1 + hits) / (1 + R)
    mc_se = math.sqrt(p_hat * (1 - p_hat) / R)
    return RandInferenceResult(t_obs, "monte_carlo", R, p_hat, p_valid, mc_se, alternative, sid,
                               vals if keep_replicates else None, diag)


def _check_compatible(stat: TestStatistic, data: FRTData, design: AssignmentDesign):
    if data.paired != (design.kind == "mpe"):
        raise ValidationError("matched-pair data need the mpe design and vice versa")
    size = data.z.size
    expected = design.n_pairs if design.kind == "mpe" else design.n
    if size != expected:
        raise ValidationError(f"data have {size} assignment units but the design has {expected}")
    if stat.id in STRATA_STATS and design.kind != "sre":
        raise ValidationError(f"statistic '{stat.id}' needs a stratified design")


def ks_asymptotic_pvalue(d: float, n1: int, n0: int) -> float:
    """Upper tail of the limiting Kolmogorov distribution at sqrt(n1 n0 / n) d."""
    if not 0 <= d <= 1 or n1 < 1 or n0 < 1:
        raise ValidationError("need 0 <= d <= 1 and group sizes >= 1")
    x = math.sqrt(n1 * n0 / (n1 + n0)) * d
    if x <= 0:
        return 1.0
    if x < 1.0:
        # pr(K <= x) = sqrt(2 pi)/x sum_j exp(-(2j-1)^2 pi^2 / (8 x^2))
        total = 0.0
        for j in range(1, 200):
            term = math.exp(-((2 * j - 1) ** 2) * math.pi**2 / (8 * x * x))
            total += term
            if j >= 50 and term < 1e-16 * max(total, 1e-300):
                break
        return float(min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / x * total)))
    # complementary alternating series, fast for x >= 1
    total = 0.0
    for j in range(1, 200):
        term = math.exp(-2 * j * j * x * x)
        total += (-1) ** (j - 1) * term
        if j >= 50 and term < 1e-16:
            break
    return float(min(1.0, max(0.0, 2 * total)))

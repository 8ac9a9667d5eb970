"""Command-line front end.

Every subcommand writes a JSON report (stdout or ``--output``) and a short
human-readable summary to stderr. Exit codes: 0 success, 1 invalid input or
configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import contingency, design_estimators, iv, matching, mediation, propensity, rdd, sensitivity
from .data_io import ColumnRole, load_csv
from .numerics import ols, replicate_rng
from .randomization import AssignmentDesign, FRTData, TestStatistic, frt
from .reporting import EstimateReport, NumericError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

# ---- serialization ----------------------------------------------------------

def _plain(obj):
    """Convert reports, numpy scalars and tuples into JSON-ready structures."""
    if hasattr(obj, "as_dict"):
        return _plain(obj.as_dict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _encode(obj, indent, level) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return format(obj, ".17g")
    return json.dumps(obj)


def to_json(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits; NaN and inf become null."""
    return _encode(_plain(obj), indent, 0) + "\n"


def curve_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    subcommand: str
    roles: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int | None = None
    R: int = 10_000
    B: int = 200
    alpha: float = 0.05
    output: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit nonnegative integer")
        if self.R < 1 or self.B < 0:
            raise ValidationError("R must be positive and B nonnegative")

    def need_seed(self, what: str):
        if self.seed is None:
            raise ValidationError(f"{what} is stochastic; pass --seed (or --B 0 to skip bootstrap SEs)")

    @property
    def boot_seed(self):
        """Seed for bootstrap SEs: required unless B = 0."""
        if self.B == 0:
            return None
        self.need_seed(f"'{self.subcommand}' with bootstrap SEs")
        return self.seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
        raise SystemExit(EXIT_INVALID)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


ROLE_FLAGS = {
    "treatment": ColumnRole.TREATMENT, "outcome": ColumnRole.OUTCOME,
    "covariates": ColumnRole.COVARIATE, "mediator": ColumnRole.MEDIATOR,
    "received": ColumnRole.TREATMENT_RECEIVED, "instrument": ColumnRole.INSTRUMENT,
    "strata": ColumnRole.STRATUM, "pair_id": ColumnRole.PAIR_ID, "running": ColumnRole.RUNNING,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="64-bit seed for every Monte Carlo step")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--R", type=int, default=10_000, help="Monte Carlo draws")
    common.add_argument("--B", type=int, default=200, help="bootstrap replicates (0 skips)")
    common.add_argument("--threads", type=int, help="worker threads (default CAUSALKIT_THREADS or 1)")
    common.add_argument("--output", help="write JSON here instead of stdout")
    common.add_argument("--curve", help="write a plot-ready CSV curve here")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="CSV file with a header row")
    data.add_argument("--treatment")
    data.add_argument("--outcome")
    data.add_argument("--covariates", type=_names, default=[])
    data.add_argument("--mediator")
    data.add_argument("--received", help="treatment-received column")
    data.add_argument("--instrument")
    data.add_argument("--strata")
    data.add_argument("--pair-id", dest="pair_id")
    data.add_argument("--running")
    data.add_argument("--diff", help="column of within-pair treated-minus-control differences")

    p = _Parser(prog="causalkit", description="Causal inference estimators and tests.")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("twobytwo", parents=[common], help="risk measures and exact test for a 2x2 table")
    for c in ("n11", "n10", "n01", "n00"):
        s.add_argument(c, type=int)
    s.add_argument("--sided", choices=["one", "two"], default="two")

    s = sub.add_parser("evalue", parents=[common], help="E-values for a risk ratio")
    s.add_argument("rr", type=float)
    s.add_argument("--ci-bound", type=float, dest="ci_bound")

    s = sub.add_parser("frt", parents=[common, data], help="Fisher randomization test")
    s.add_argument("--design", choices=["cre", "bernoulli", "sre", "mpe", "rem"], default="cre")
    s.add_argument("--stat", default="diff_means")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--mc", action="store_true")
    s.add_argument("--alternative", choices=["greater", "less", "two-sided"], default="greater")
    s.add_argument("--p", type=float, default=0.5, help="Bernoulli assignment probability")
    s.add_argument("--threshold", type=float, help="rerandomization threshold")

    s = sub.add_parser("estimate", parents=[common, data], help="design-based estimators")
    s.add_argument("--method", choices=["neyman", "stratified", "lin", "lin_super", "mpe", "gain",
                                        "lin_sre"], default="neyman")
    s.add_argument("--hc", default="HC2")
    s.add_argument("--lag", help="lagged outcome column for the gain score")

    s = sub.add_parser("obs", parents=[common, data], help="propensity-score estimators")
    s.add_argument("--method", choices=["ht", "hajek", "dr", "att", "overlap", "stratify", "balance",
                                        "hajek_wls"], default="dr")
    s.add_argument("--trunc", choices=sorted(propensity.TRUNCATION_PRESETS))
    s.add_argument("--K", type=int, default=5)
    s.add_argument("--family", choices=["linear", "logistic"], default="linear")
    s.add_argument("--target", choices=["ate", "att"], default="ate")
    s.add_argument("--balance-method", dest="balance_method", default="stratified",
                   choices=["stratified", "hajek", "unweighted"])

    s = sub.add_parser("match", parents=[common, data], help="nearest-neighbour matching")
    s.add_argument("--M", type=int, default=1)
    s.add_argument("--metric", choices=["euclidean", "mahalanobis"], default="euclidean")
    s.add_argument("--target", choices=["ate", "att"], default="ate")
    s.add_argument("--no-bias-correct", dest="bias_correct", action="store_false")

    s = sub.add_parser("sens", parents=[common, data], help="sensitivity analyses and bounds")
    s.add_argument("--kind", choices=["rosenbaum", "epsilon", "manski", "survivor"], required=True)
    s.add_argument("--gamma", type=_floats, default=None, help="gamma grid (rosenbaum)")
    s.add_argument("--rstat", choices=list(sensitivity.ROSENBAUM_STATS), default="pair_t_abs")
    s.add_argument("--eps1", type=_floats, default=[1.0])
    s.add_argument("--eps0", type=_floats, default=[1.0])
    s.add_argument("--estimator", choices=["reg", "ht", "hajek", "dr"], default="dr")
    s.add_argument("--bounds", type=_floats, help="outcome range ymin,ymax (manski)")
    s.add_argument("--counts", type=_floats, help="t_y1,t_y0,t_dead,c_y1,c_y0,c_dead (survivor)")

    s = sub.add_parser("iv", parents=[common, data], help="instrumental variables")
    s.add_argument("--method", choices=["wald", "wald_adjusted", "tsls", "far", "binary"], default="wald")
    s.add_argument("--se", choices=["delta", "bootstrap"], default="delta")
    s.add_argument("--far-mode", dest="far_mode", choices=["cre", "cre_covariates", "linear_iv"],
                   default="cre")
    s.add_argument("--grid", type=_floats, help="lo,hi,step for the FAR grid")
    s.add_argument("--counts", type=_floats, help="n111,n110,n101,n100,n011,n010,n001,n000 (binary)")
    s.add_argument("--hc", default=None)

    s = sub.add_parser("rdd", parents=[common, data], help="regression discontinuity")
    s.add_argument("--cutoff", type=float, required=True)
    s.add_argument("--h", type=float, default=math.inf)
    s.add_argument("--sweep", type=_floats, help="bandwidth grid")
    s.add_argument("--hc", default="HC0")

    s = sub.add_parser("mediate", parents=[common, data], help="mediation analysis")
    s.add_argument("--method", choices=["baron_kenny", "formula", "psw", "cde"], default="baron_kenny")
    s.add_argument("--interaction", action="store_true")
    s.add_argument("--m-level", dest="m_level", type=float, default=1.0)
    s.add_argument("--estimator", choices=["reg", "ht", "hajek", "dr"], default="dr")

    s = sub.add_parser("bias-demo", parents=[common], help="simulated M-bias and Z-bias")
    s.add_argument("--kind", choices=["m_bias", "z_bias"], required=True)
    for c, d in (("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0), ("tau", 0.0)):
        s.add_argument(f"--{c}", type=float, default=d)
    s.add_argument("--n", type=int, default=10**6)
    return p


def config_from_args(args) -> RunConfig:
    roles = {k: getattr(args, k) for k in ROLE_FLAGS if getattr(args, k, None)}
    skip = set(roles) | {"subcommand", "seed", "R", "B", "alpha", "output", "threads"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    return RunConfig(args.subcommand, roles, options, args.seed, args.R, args.B, args.alpha,
                     args.output, args.threads)


# ---- data access --------------------------------------------------------------

class _Data:
    def __init__(self, cfg: RunConfig):
        path = cfg.options.get("data")
        if not path:
            raise ValidationError(f"'{cfg.subcommand}' needs --data")
        role_map = {}
        for flag, role in ROLE_FLAGS.items():
            if flag in cfg.roles:
                role_map[role.value] = cfg.roles[flag]
        extra = [c for c in (cfg.options.get("diff"), cfg.options.get("lag")) if c]
        self.ds = load_csv(path, role_map)
        for c in extra:
            self.ds.column(c)
        self.ds.require_complete()
        self.extra = {c: self.ds.column(c) for c in extra}

    def get(self, role, required=True):
        return self.ds.get(role, required)

    @property
    def X(self):
        return self.ds.covariates()

    @property
    def names(self):
        return self.ds.names_with_role(ColumnRole.COVARIATE)


# ---- subcommands --------------------------------------------------------------

def _twobytwo(cfg, o):
    t = contingency.TwoByTwo(o["n11"], o["n10"], o["n01"], o["n00"])
    rm = contingency.risk_measures(t, cfg.alpha)
    p = contingency.hypergeom_exact(t, o["sided"])
    out = {"method": "two_by_two", "estimand": "risk difference", "estimate": rm.rd,
           "se": rm.se_rd, "ci": list(rm.ci_rd), "p_value": p, "n": t.n,
           "diagnostics": {"rr": rm.rr, "ci_rr": list(rm.ci_rr), "or": rm.or_, "ci_or": list(rm.ci_or),
                           "exact_test": o["sided"] + "-sided", "flags": list(rm.flags)}}
    return out, f"rd = {rm.rd:.4f}  rr = {rm.rr:.4f}  or = {rm.or_:.4f}  exact p = {p:.4g}", None


def _evalue(cfg, o):
    if o.get("ci_bound") is None:
        e = contingency.evalue(o["rr"])
        out = {"method": "evalue", "estimand": "E-value", "estimate": e, "diagnostics": {"rr": o["rr"]}}
        return out, f"E-value = {e:.4f}", None
    ep, ec = contingency.evalue_report(o["rr"], o["ci_bound"])
    out = {"method": "evalue", "estimand": "E-value", "estimate": ep,
           "diagnostics": {"rr": o["rr"], "ci_bound": o["ci_bound"], "evalue_ci": ec}}
    return out, f"E-values: point {ep:.4f}, interval limit {ec:.4f}", None


def _frt(cfg, o):
    d = _Data(cfg)
    kind = o["design"]
    if kind == "mpe":
        if o.get("diff"):
            data = FRTData.pairs(d.extra[o["diff"]])
        else:
            data = FRTData.pairs_from_units(d.get(ColumnRole.PAIR_ID), d.get(ColumnRole.TREATMENT),
                                            d.get(ColumnRole.OUTCOME))
        design = AssignmentDesign.mpe(data.d.size)
    else:
        z, y = d.get(ColumnRole.TREATMENT), d.get(ColumnRole.OUTCOME)
        X = d.X if d.X.shape[1] else None
        strata = d.get(ColumnRole.STRATUM, required=False)
        data = FRTData.units(z, y, X, strata)
        n1 = int(data.z.sum())
        if kind == "cre":
            design = AssignmentDesign.cre(n1, z.size - n1)
        elif kind == "bernoulli":
            design = AssignmentDesign.bernoulli(z.size, o["p"])
        elif kind == "sre":
            if strata is None:
                raise ValidationError("the sre design needs --strata")
            design = AssignmentDesign.sre_from_data(z, strata)
        else:
            if X is None or o.get("threshold") is None:
                raise ValidationError("the rem design needs --covariates and --threshold")
            design = AssignmentDesign.rem(n1, z.size - n1, X, o["threshold"])
    mode = "exact" if o["exact"] else ("mc" if o["mc"] else "auto")
    if mode != "exact" and (mode == "mc" or design.support_size() > 10**6):
        cfg.need_seed("a Monte Carlo randomization test")
    res = frt(data, design, TestStatistic(o["stat"]), mode, cfg.R, cfg.seed, o["alternative"],
              cfg.threads)
    out = {"method": f"frt_{res.mode}", "estimand": "sharp null", "estimate": res.observed,
           "p_value": res.p_valid, "n": int(data.z.size),
           "diagnostics": {"statistic": res.statistic, "design": kind, "count": res.count,
                           "p_hat": res.p_hat, "alternative": res.alternative, **res.diagnostics}}
    if res.mc_se is not None:
        out["diagnostics"]["mc_se"] = res.mc_se
    return out, f"{res.statistic} = {res.observed:.6g}  p = {res.p_valid:.8g} ({res.mode}, {res.count} draws)", None


def _estimate(cfg, o):
    d = _Data(cfg)
    m = o["method"]
    if m == "mpe":
        if o.get("diff"):
            return design_estimators.mpe(d.extra[o["diff"]], alpha=cfg.alpha), None, None
        dd, dX = design_estimators.pair_differences(d.get(ColumnRole.PAIR_ID), d.get(ColumnRole.TREATMENT),
                                                    d.get(ColumnRole.OUTCOME), d.X)
        return design_estimators.mpe(dd, dX if dX.shape[1] else None, cfg.alpha), None, None
    z, y = d.get(ColumnRole.TREATMENT), d.get(ColumnRole.OUTCOME)
    if m == "neyman":
        return design_estimators.neyman_cre(z, y, cfg.alpha), None, None
    if m == "stratified":
        return design_estimators.stratified(z, y, d.get(ColumnRole.STRATUM), cfg.alpha), None, None
    if m in ("lin", "lin_super"):
        return design_estimators.lin_adjust(z, y, d.X, "super" if m == "lin_super" else "finite",
                                            cfg.alpha, o["hc"]), None, None
    if m == "lin_sre":
        return design_estimators.lin_sre(z, y, d.X, d.get(ColumnRole.STRATUM), cfg.alpha, o["hc"]), None, None
    if not o.get("lag"):
        raise ValidationError("the gain score needs --lag")
    return design_estimators.gain_score(z, y, d.extra[o["lag"]], cfg.alpha), None, None


def _trunc(o):
    return propensity.TRUNCATION_PRESETS[o["trunc"]] if o.get("trunc") else None


def _obs(cfg, o):
    d = _Data(cfg)
    z, y, X = d.get(ColumnRole.TREATMENT), d.get(ColumnRole.OUTCOME), d.X
    m, a, thr = o["method"], cfg.alpha, cfg.threads
    if m == "balance":
        ps = propensity.fit_pscore(X, z).scores
        return propensity.balance_check(ps, z, X, o["balance_method"], o["K"], d.names, a), None, None
    if m == "stratify":
        ps = propensity.fit_pscore(X, z).scores
        return propensity.ps_stratify(ps, z, y, o["K"], a), None, None
    seed = cfg.boot_seed
    if m in ("ht", "hajek"):
        return propensity.ipw(z, y, X, m, _trunc(o), None, cfg.B, seed, a, thr), None, None
    if m == "dr":
        return propensity.doubly_robust_ate(z, y, X, o["family"], _trunc(o), cfg.B, seed, a, thr), None, None
    if m == "att":
        tr = _trunc(o)
        return propensity.att_estimators(z, y, X, tr[1] if tr else 1.0, o["family"], cfg.B, seed, a, thr), None, None
    if m == "overlap":
        return propensity.overlap_weight_tau_O(z, y, X, "centred", cfg.B, seed, a, thr), None, None
    return propensity.hajek_wls(z, y, X, o["target"], True, cfg.B, seed, a, thr), None, None


def _match(cfg, o):
    d = _Data(cfg)
    return matching.matching_estimate(d.get(ColumnRole.TREATMENT), d.get(ColumnRole.OUTCOME), d.X,
                                      o["M"], o["metric"], o["target"], o["bias_correct"], cfg.alpha,
                                      cfg.threads), None, None


def _pair_diffs(d, o):
    if o.get("diff"):
        return d.extra[o["diff"]]
    dd, _ = design_estimators.pair_differences(d.get(ColumnRole.PAIR_ID), d.get(ColumnRole.TREATMENT),
                                               d.get(ColumnRole.OUTCOME))
    return dd


def _sens(cfg, o):
    k = o["kind"]
    if k == "survivor":
        if not o.get("counts") or len(o["counts"]) != 6:
            raise ValidationError("survivor bounds need --counts with six values")
        counts = sensitivity.SurvivorCounts(*[int(v) for v in o["counts"]])
        return sensitivity.survivor_bounds(counts, cfg.B, cfg.boot_seed, cfg.alpha, cfg.threads), None, None
    d = _Data(cfg)
    if k == "rosenbaum":
        diffs = _pair_diffs(d, o)
        grid = o.get("gamma") or np.round(np.arange(1.0, 3.0001, 0.01), 10).tolist()
        curve, gstar = sensitivity.gamma_curve(diffs, grid, o["rstat"], cfg.alpha, cfg.threads)
        root = sensitivity.gamma_star(diffs, o["rstat"], cfg.alpha)
        out = {"method": "rosenbaum", "estimand": "gamma*", "estimate": root,
               "n": int(np.count_nonzero(diffs)),
               "diagnostics": {"statistic": o["rstat"], "grid_gamma_star": gstar, "alpha": cfg.alpha}}
        return out, None, curve_csv(["gamma", "p_value"], curve.rows())
    z, y = d.get(ColumnRole.TREATMENT), d.get(ColumnRole.OUTCOME)
    if k == "manski":
        if not o.get("bounds") or len(o["bounds"]) != 2:
            raise ValidationError("Manski bounds need --bounds ymin,ymax")
        return sensitivity.manski_bounds(z, y, *o["bounds"]), None, None
    e1, e0 = o["eps1"], o["eps0"]
    if len(e1) == 1 and len(e0) == 1:
        return sensitivity.epsilon_sensitivity(z, y, d.X, e1[0], e0[0], o["estimator"], B=cfg.B,
                                               seed=cfg.boot_seed, alpha=cfg.alpha, threads=cfg.threads), None, None
    grid = sensitivity.epsilon_grid(z, y, d.X, e1, e0, o["estimator"])
    rows = [(a, b, float(grid[i, j])) for i, a in enumerate(e1) for j, b in enumerate(e0)]
    out = {"method": f"epsilon_{o['estimator']}", "estimand": "ATE", "n": int(z.size),
           "diagnostics": {"eps1": e1, "eps0": e0, "grid": grid}}
    return out, None, curve_csv(["eps1", "eps0", "estimate"], rows)


def _far_grid(o):
    g = o.get("grid")
    if g is None:
        return None
    if len(g) != 3 or g[2] <= 0 or g[1] <= g[0]:
        raise ValidationError("--grid takes lo,hi,step with hi > lo and step > 0")
    k = int(round((g[1] - g[0]) / g[2]))
    return g[0] + g[2] * np.arange(k + 1)


def _iv(cfg, o):
    m = o["method"]
    if m == "binary":
        if not o.get("counts"):
            raise ValidationError("the binary decomposition needs --counts")
        summ = iv.binary_iv_decompose(o["counts"])
        ineq = iv.iv_inequalities(o["counts"])
        out = {"method": "binary_iv", "estimand": "tau_c", "estimate": summ.tau_c,
               "diagnostics": {**summ.as_dict(), "inequalities": [i.__dict__ for i in ineq]}}
        return out, None, None
    d = _Data(cfg)
    z, y = d.get(ColumnRole.INSTRUMENT), d.get(ColumnRole.OUTCOME)
    dd = d.get(ColumnRole.TREATMENT_RECEIVED)
    X = d.X
    if m == "wald":
        seed = cfg.boot_seed if o["se"] == "bootstrap" else None
        return iv.wald(z, dd, y, o["se"], cfg.alpha, cfg.B, seed, cfg.threads), None, None
    if m == "wald_adjusted":
        return iv.wald_adjusted(z, dd, y, X, cfg.alpha, cfg.B, cfg.boot_seed, cfg.threads), None, None
    if m == "tsls":
        return iv.tsls(y, dd, z, X if X.shape[1] else None, cfg.alpha, o.get("hc") or "HC0"), None, None
    fs = iv.far_confidence_set(z, dd, y, X if X.shape[1] else None, _far_grid(o), cfg.alpha,
                               o["far_mode"], o.get("hc") or "HC3", cfg.threads)
    out = {"method": f"far_{o['far_mode']}", "estimand": "tau_c", "estimate": fs.point,
           "n": int(z.size), "diagnostics": fs.as_dict()}
    if fs.intervals and fs.shape == "interval":
        out["ci"] = list(fs.intervals[0])
    return out, None, curve_csv(["b", "p_value"], list(zip(fs.grid.tolist(), fs.p_values.tolist())))


def _rdd(cfg, o):
    d = _Data(cfg)
    x, y = d.get(ColumnRole.RUNNING), d.get(ColumnRole.OUTCOME)
    dd = d.get(ColumnRole.TREATMENT_RECEIVED, required=False)
    spec = rdd.RddSpec(x, o["cutoff"], o["h"])
    if o.get("sweep"):
        pts = rdd.bandwidth_sweep(spec, y, o["sweep"], dd, cfg.alpha, o["hc"], cfg.threads)
        out = {"method": "rdd_sweep", "estimand": "tau(x0)", "n": int(x.size),
               "diagnostics": {"points": [{"h": p.h, "report": p.report, "error": p.error} for p in pts]}}
        rows = [(p.h, p.report.estimate if p.report else math.nan, p.report.ci[0] if p.report else math.nan,
                 p.report.ci[1] if p.report else math.nan) for p in pts]
        return out, None, curve_csv(["h", "estimate", "ci_lower", "ci_upper"], rows)
    if dd is None:
        return rdd.sharp_rdd(spec, y, cfg.alpha, hc=o["hc"]), None, None
    return rdd.fuzzy_rdd(spec, dd, y, cfg.alpha, hc=o["hc"]), None, None


def _mediate(cfg, o):
    d = _Data(cfg)
    z, mm, y = d.get(ColumnRole.TREATMENT), d.get(ColumnRole.MEDIATOR), d.get(ColumnRole.OUTCOME)
    X = d.X
    m = o["method"]
    if m == "baron_kenny":
        seed = cfg.boot_seed if o["interaction"] else None
        return mediation.baron_kenny(z, mm, y, X, cfg.alpha, interaction=o["interaction"], B=cfg.B,
                                     seed=seed, threads=cfg.threads), None, None
    if m == "formula":
        return mediation.mediation_formula_binary_m(z, mm, y, X, cfg.alpha, cfg.B, cfg.boot_seed,
                                                    cfg.threads), None, None
    if m == "psw":
        return mediation.principal_score_weighting(z, mm, y, X, cfg.alpha, cfg.B, cfg.boot_seed,
                                                   cfg.threads), None, None
    return mediation.cde_estimators(z, mm, y, X, o["m_level"], o["estimator"], cfg.alpha, cfg.B,
                                    cfg.boot_seed, cfg.threads), None, None


# ---- bias demonstrations ----------------------------------------------------------

def bias_targets(kind: str, a=1.0, b=1.0, c=1.0, d=1.0, tau=0.0) -> dict:
    """Population coefficients of Z in the unadjusted and X-adjusted regressions."""
    if kind == "z_bias":
        return {"unadjusted": tau + b * c / (a * a + b * b + 1), "adjusted": tau + b * c / (b * b + 1)}
    if kind == "m_bias":
        det = (c * c + 1) * (a * a + b * b + 1) - (a * c) ** 2
        return {"unadjusted": 0.0, "adjusted": -a * b * c * d / det}
    raise ValidationError("kind must be 'm_bias' or 'z_bias'")


def bias_demo(kind: str, a=1.0, b=1.0, c=1.0, d=1.0, tau=0.0, n: int = 10**6, seed=None) -> dict:
    """Simulate the linear M-bias or Z-bias structure and compare the OLS
    coefficients of Z with and without X against their population values.

    Z-bias: Z = aX + bU + e, Y = tau Z + cU + e. M-bias: X = aU1 + bU2 + e,
    Z = cU1 + e, Y = dU2 + e. All inputs standard normal.
    """
    if n < 10**4:
        raise ValidationError("bias demonstrations need n >= 10^4")
    if seed is None:
        raise ValidationError("bias demonstrations are stochastic; a seed is required")
    rng = replicate_rng(seed, 0)
    if kind == "z_bias":
        X, U, ez, ey = rng.standard_normal((4, n))
        Z = a * X + b * U + ez
        Y = tau * Z + c * U + ey
    elif kind == "m_bias":
        U1, U2, ex, ez, ey = rng.standard_normal((5, n))
        X = a * U1 + b * U2 + ex
        Z = c * U1 + ez
        Y = d * U2 + ey
    else:
        raise ValidationError("kind must be 'm_bias' or 'z_bias'")
    one = np.ones(n)
    un = ols(np.column_stack([one, Z]), Y)
    ad = ols(np.column_stack([one, Z, X]), Y)
    target = bias_targets(kind, a, b, c, d, tau)
    out = {}
    for name, fit in (("unadjusted", un), ("adjusted", ad)):
        est = float(fit.coefficients[1])
        mc_se = float(np.sqrt(fit.model_cov[1, 1]))
        out[name] = {"estimate": est, "mc_se": mc_se, "target": target[name],
                     "z": (est - target[name]) / mc_se}
    return {"method": f"bias_demo_{kind}", "n": n,
            "diagnostics": {"params": {"a": a, "b": b, "c": c, "d": d, "tau": tau}, **out}}


def _bias_demo(cfg, o):
    cfg.need_seed("bias-demo")
    out = bias_demo(o["kind"], o["a"], o["b"], o["c"], o["d"], o["tau"], o["n"], cfg.seed)
    dg = out["diagnostics"]
    msg = "  ".join(f"{k}: {dg[k]['estimate']:.4f} (target {dg[k]['target']:.4f})"
                    for k in ("unadjusted", "adjusted"))
    return out, msg, None


COMMANDS = {"twobytwo": _twobytwo, "evalue": _evalue, "frt": _frt, "estimate": _estimate, "obs": _obs,
            "match": _match, "sens": _sens, "iv": _iv, "rdd": _rdd, "mediate": _mediate,
            "bias-demo": _bias_demo}


def _summary(report) -> str:
    if isinstance(report, EstimateReport):
        return (f"{report.method}: {report.estimand} = {report.estimate:.6g}  se = {report.se:.4g}  "
                f"ci = [{report.ci[0]:.6g}, {report.ci[1]:.6g}]")
    if isinstance(report, list):
        return "\n".join(_summary(r) for r in report)
    if isinstance(report, dict) and report and all(isinstance(v, EstimateReport) for v in report.values()):
        return "\n".join(f"{k}  " + _summary(v) for k, v in report.items())
    if isinstance(report, mediation.MediationReport):
        return _summary({"NDE": report.nde, "NIE": report.nie}) + "\nnote: " + report.caveat
    if isinstance(report, sensitivity.BoundsReport):
        return f"bounds [{report.lower:.6g}, {report.upper:.6g}]"
    return ""


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute one configured command; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        report, human, curve = COMMANDS[cfg.subcommand](cfg, cfg.options)
    except ValidationError as exc:
        stderr.write(to_json({"error": "validation", "type": type(exc).__name__, "message": str(exc)}))
        return EXIT_INVALID
    except NumericError as exc:
        stderr.write(to_json({"error": "numeric", "type": type(exc).__name__, "message": str(exc)}))
        return EXIT_NUMERIC
    text = to_json(report)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    curve_path = cfg.options.get("curve")
    if curve and curve_path:
        with open(curve_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(curve)
    human = human or _summary(report)
    if human:
        stderr.write(human + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValidationError as exc:
        sys.stderr.write(to_json({"error": "validation", "message": str(exc)}))
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())

"""Experiments for the inference layer: quantiles, confidence sets, max-mean tests, conformal."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from ..cv import LossMatrix, RiskOracle, _fill_losses, cv_losses, fold_models, summarize
from ..data import make_fold_plan
from ..gauss import ACCEPTANCE_DRAWS, QuantileRequest, quantile
from ..learners import LearnerSpec
from ..maxmean import argmin_set, loo_statistic, plain_softmax_statistic, select_lambda, test_max_mean
from ..mcs import cvc_select, default_quantile, mcs_diff, mcs_naive
from ..conformal import fit_cross, prediction_set
from ..seeding import child_seed, stream
from .base import ExperimentConfig, Report, column, ks_normal, ks_uniform, parallel_map

# --------------------------------------------------------------------------
# Gaussian max quantiles

GAUSS = {"draws": ACCEPTANCE_DRAWS, "tol": 0.01,
         "cases": [["m1_abs", [[1.0]], "abs", 1.959964], ["m1_one_sided", [[1.0]], "one_sided", 1.644854],
                   ["m2_identity_abs", [[1.0, 0.0], [0.0, 1.0]], "abs", 2.236477]], "beta": 0.05}


def run_gauss(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(GAUSS)
    rep = Report(cfg.name, cfg.seed, p)
    for k, (label, g, sided, ref) in enumerate(p["cases"]):
        q = quantile(QuantileRequest(np.asarray(g, float), p["beta"], sided, int(p["draws"])), child_seed(cfg.seed, 3, k))
        rep.summary[label] = q
        rep.check(f"quantile {label}", q, f"{ref} +/- {p['tol']}", abs(q - ref) <= p["tol"])
    return rep


# --------------------------------------------------------------------------
# model confidence sets on nested linear models

MCS = {"n": 400, "K": 5, "beta": 0.1, "replicates": 500, "f_star": [1.0, 0.5, 0.25, 0.0, 0.0],
       "sigma2": 1.0, "draws": 20_000, "coverage_min": 0.88}


def _nested_specs(p):
    return [LearnerSpec("ridge", lam=0.0, support=tuple(range(r + 1))) for r in range(p)]


def _mcs_rep(p, seed, i):
    gen = RiskOracle(tuple(p["f_star"]), sigma2=p["sigma2"])
    d = gen.draw(stream(seed, 61, i), p["n"])
    specs = _nested_specs(len(p["f_star"]))
    plan = make_fold_plan(p["n"], p["K"])
    models = fold_models(specs, d, plan)
    L = LossMatrix(_fill_losses(models, d, plan, "squared"), plan, tuple(s.label for s in specs))
    r_bar = np.array([np.mean([gen.risk(models[k][r]) for k in range(p["K"])]) for r in range(len(specs))])
    S = summarize(L, r_bar=r_bar)
    engine = default_quantile(int(p["draws"]), child_seed(seed, 61, i))
    naive = mcs_naive(S, p["beta"], engine=engine)
    diff = mcs_diff(L, p["beta"], engine=engine)
    stars = np.flatnonzero(r_bar == r_bar.min())
    r_cv = int(np.argmin(S.r_hat))
    return {"r_star": int(stars[0]), "naive_cover": all(int(s) in naive for s in stars),
            "diff_cover": all(int(s) in diff for s in stars),
            "argmin_in_naive": r_cv in naive, "argmin_in_diff": r_cv in diff,
            "naive_size": len(naive.members), "diff_size": len(diff.members)}


def run_mcs(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(MCS)
    rows = parallel_map(_mcs_rep, p, cfg.seed, p["replicates"], cfg.workers)
    rep = Report(cfg.name, cfg.seed, p)
    cov_n, cov_d = column(rows, "naive_cover").mean(), column(rows, "diff_cover").mean()
    arg = column(rows, "argmin_in_naive").all() and column(rows, "argmin_in_diff").all()
    rep.summary = {"coverage_naive": cov_n, "coverage_diff": cov_d,
                   "mean_size_naive": column(rows, "naive_size").mean(),
                   "mean_size_diff": column(rows, "diff_size").mean(),
                   "r_star_counts": np.bincount(column(rows, "r_star"), minlength=len(p["f_star"]))}
    rep.raw["replicates"] = rows
    rep.check("coverage of r* by the naive set", cov_n, f">= {p['coverage_min']}", cov_n >= p["coverage_min"])
    rep.check("coverage of r* by the difference set", cov_d, f">= {p['coverage_min']}", cov_d >= p["coverage_min"])
    rep.check("argmin of R_cv belongs to both sets", bool(arg), "100% of replicates", arg)
    return rep


# --------------------------------------------------------------------------
# parsimonious selection over all subsets

CVC = {"n": 1000, "K": 5, "beta": 0.1, "replicates": 200, "f_star": [1.0, 1.0, 0.0, 0.0, 0.0],
       "sigma2": 1.0, "draws": 20_000, "freq_min": 0.9}


def all_subsets(p: int) -> list[tuple]:
    """Every subset of range(p), ordered by size and then lexicographically."""
    return [c for k in range(p + 1) for c in combinations(range(p), k)]


def _subset_spec(J):
    return LearnerSpec("ridge", lam=0.0, support=J) if J else LearnerSpec("constant_zero")


def _cvc_rep(p, seed, i):
    gen = RiskOracle(tuple(p["f_star"]), sigma2=p["sigma2"])
    d = gen.draw(stream(seed, 67, i), p["n"])
    subsets = all_subsets(len(p["f_star"]))
    L = cv_losses([_subset_spec(J) for J in subsets], d, make_fold_plan(p["n"], p["K"]))
    S = summarize(L)
    cs = mcs_naive(S, p["beta"], engine=default_quantile(int(p["draws"]), child_seed(seed, 67, i)))
    sizes = [len(J) for J in subsets]
    j_cvc = subsets[cvc_select(cs, sizes)]
    j_cv = subsets[int(np.argmin(S.r_hat))]
    truth = tuple(int(j) for j in np.flatnonzero(np.asarray(p["f_star"]) != 0))
    return {"cvc_hit": j_cvc == truth, "cv_hit": j_cv == truth, "cvc_size": len(j_cvc), "cv_size": len(j_cv),
            "set_size": len(cs.members)}


def run_cvc(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(CVC)
    rows = parallel_map(_cvc_rep, p, cfg.seed, p["replicates"], cfg.workers)
    rep = Report(cfg.name, cfg.seed, p)
    f_cvc, f_cv = column(rows, "cvc_hit").mean(), column(rows, "cv_hit").mean()
    smaller = bool(np.all(column(rows, "cvc_size") <= column(rows, "cv_size")))
    rep.summary = {"freq_cvc": f_cvc, "freq_cv": f_cv, "mean_set_size": column(rows, "set_size").mean()}
    rep.raw["replicates"] = rows
    rep.check("frequency of CVC selecting J*", f_cvc, f">= {p['freq_min']}", f_cvc >= p["freq_min"])
    rep.check("CVC beats plain CV", [f_cvc, f_cv], "freq_cvc > freq_cv", f_cvc > f_cv)
    rep.check("|J_cvc| <= |J_cv| in every replicate", smaller, "exact", smaller)
    return rep


# --------------------------------------------------------------------------
# softmax max-mean statistic under the null

FIG53 = {"n": 500, "m": 10, "replicates": 2000, "beta": 0.05, "epsilon": 0.05, "B": 1000, "ks_max": 0.05,
         "ks_factor": 2.0, "size_max": 0.07, "cover_min": 0.93}


def _fig53_rep(p, seed, i):
    X = stream(seed, 53, i).standard_normal((p["n"], p["m"]))
    sel = select_lambda(X, epsilon=p["epsilon"], B=p["B"], seed=child_seed(seed, 53, i))
    st = loo_statistic(X, sel.chosen)
    res = test_max_mean(st, p["beta"])
    inf = loo_statistic(X, np.inf)
    plain = plain_softmax_statistic(X, sel.chosen)
    rn = np.sqrt(p["n"])
    return {"lambda": sel.chosen, "softmax_cv": rn * st.t_stat / st.sigma_hat,
            "hardmax_cv": rn * inf.t_stat / inf.sigma_hat, "softmax_plain": rn * plain.t_stat / plain.sigma_hat,
            "reject": res.reject, "covers": res.lower_bound <= 0.0}


def run_fig53(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(FIG53)
    rows = parallel_map(_fig53_rep, p, cfg.seed, p["replicates"], cfg.workers)
    rep = Report(cfg.name, cfg.seed, p)
    ks = {k: ks_normal(column(rows, k)) for k in ("softmax_cv", "hardmax_cv", "softmax_plain")}
    size, cover = column(rows, "reject").mean(), column(rows, "covers").mean()
    lam = column(rows, "lambda")
    rep.summary = {"ks": ks, "rejection_rate": size, "lower_bound_coverage": cover,
                   "lambda_values": {str(v): int(np.sum(lam == v)) for v in np.unique(lam)}}
    rep.raw["standardized"] = [{k: r[k] for k in ("lambda", "softmax_cv", "hardmax_cv", "softmax_plain")} for r in rows]
    f = p["ks_factor"]
    rep.check("KS of the standardized softmax CV statistic", ks["softmax_cv"], f"<= {p['ks_max']}",
              ks["softmax_cv"] <= p["ks_max"])
    rep.check("KS of the hard-max CV statistic is much larger", ks["hardmax_cv"], f">= {f} x softmax KS",
              ks["hardmax_cv"] >= f * ks["softmax_cv"])
    rep.check("KS of the non-CV softmax statistic is much larger", ks["softmax_plain"], f">= {f} x softmax KS",
              ks["softmax_plain"] >= f * ks["softmax_cv"])
    rep.check("null rejection rate", size, f"<= {p['size_max']}", size <= p["size_max"])
    rep.check("lower bound covers max theta", cover, f">= {p['cover_min']}", cover >= p["cover_min"])
    return rep


# --------------------------------------------------------------------------
# argmin confidence sets

ARGMIN = {"n": 500, "beta": 0.1, "replicates": 500, "theta": [0.0, 0.05, 0.1, 0.2, 10.0],
          "noise": [1.0, 1.0, 1.0, 1.0, 0.01], "epsilon": 0.05, "B": 1000, "include_min": 0.88,
          "exclude_min": 0.95}


def _argmin_rep(p, seed, i):
    theta, sd = np.asarray(p["theta"]), np.asarray(p["noise"])
    X = theta + sd * stream(seed, 71, i).standard_normal((p["n"], theta.size))
    res = argmin_set(X, p["beta"], epsilon=p["epsilon"], B=p["B"], seed=child_seed(seed, 71, i))
    best, worst = int(np.argmin(theta)), int(np.argmax(theta))
    return {"included": best in res.members, "excluded": worst not in res.members, "size": len(res.members)}


def run_argmin(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(ARGMIN)
    rows = parallel_map(_argmin_rep, p, cfg.seed, p["replicates"], cfg.workers)
    rep = Report(cfg.name, cfg.seed, p)
    inc, exc = column(rows, "included").mean(), column(rows, "excluded").mean()
    rep.summary = {"argmin_included": inc, "dominated_excluded": exc, "mean_size": column(rows, "size").mean()}
    rep.raw["replicates"] = rows
    rep.check("argmin included", inc, f">= {p['include_min']}", inc >= p["include_min"])
    rep.check("dominated index excluded", exc, f">= {p['exclude_min']}", exc >= p["exclude_min"])
    return rep


# --------------------------------------------------------------------------
# cross-conformal validity

CONFORMAL = {"n": 500, "K": 5, "replicates": 1000, "alpha": 0.1, "lam": 1.0, "f_star": [1.0, -1.0, 0.5],
             "sigma2": 1.0, "grid": [-15.0, 15.0, 3001], "ks_max": 0.05, "coverage": [0.88, 0.93]}


def _conformal_rep(p, seed, i):
    gen = RiskOracle(tuple(p["f_star"]), sigma2=p["sigma2"])
    rng = stream(seed, 73, i)
    d = gen.draw(rng, p["n"])
    z0, y0 = gen.draw_arrays(rng, 1)
    spec = LearnerSpec("ridge", lam=p["lam"])
    cc = fit_cross(d, p["K"], spec)
    pv = cc.p_value(float(y0[0]), z0[0])
    lo, hi, num = p["grid"]
    ps = prediction_set(d, p["K"], spec, z0[0], p["alpha"], np.linspace(lo, hi, int(num)), cc=cc)
    return {"p_cc": pv, "covered": ps.contains(float(y0[0])), "pieces": len(ps.intervals)}


def run_conformal(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(CONFORMAL)
    rows = parallel_map(_conformal_rep, p, cfg.seed, p["replicates"], cfg.workers)
    rep = Report(cfg.name, cfg.seed, p)
    ks = ks_uniform(column(rows, "p_cc"))
    cov = column(rows, "covered").mean()
    lo, hi = p["coverage"]
    rep.summary = {"ks": ks, "coverage": cov, "max_pieces": int(column(rows, "pieces").max())}
    rep.raw["p_values"] = [{"p_cc": r["p_cc"], "covered": r["covered"]} for r in rows]
    rep.check("KS(p_cc, U(0,1))", ks, f"<= {p['ks_max']}", ks <= p["ks_max"])
    rep.check("prediction-set coverage", cov, f"[{lo}, {hi}]", lo <= cov <= hi)
    return rep

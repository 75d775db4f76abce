"""Stability decay of SGD-type learners, rolling validation and the Efron-Stein check."""
from __future__ import annotations

import numpy as np

from ..cv import RiskOracle
from ..learners import LearnerSpec
from ..rollval import delay_crossing, delay_formula, rolling_batch
from ..seeding import child_seed, stream
from ..stability import efron_stein_check, loglog_slope, nabla2_samples, nabla_samples, sgd_bound_check
from .base import ExperimentConfig, Report, column, parallel_map

# Ridge SGD with bounded covariates and responses: |z| <= 1 coordinatewise in
# a 2-d model with ||f*|| well inside the unit ball, so r_x = r_f = 1 is valid
# once the responses stay bounded (uniform noise).
SGD = {"lam": 2.0, "a": 0.5, "n_grid": [100, 200, 400, 800, 1600, 3200], "replicates": 50,
       "f_star": [0.5, -0.5], "sigma2": 0.04 / 3, "sz": [0.16 / 3, 0.16 / 3], "slope_tol": 0.15,
       "second_slope_slack": 0.2}


def _sgd_setup(p):
    spec = LearnerSpec("sgd", objective="ridge", lam=p["lam"], a=p["a"], r_x=1.0, r_f=1.0, shuffle=False)
    gen = RiskOracle(tuple(p["f_star"]), sigma2=p["sigma2"], sz_diag=tuple(p["sz"]),
                     covariates="uniform", noise="uniform")
    return spec, gen


def run_sgd_first(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(SGD)
    spec, gen = _sgd_setup(p)
    out = sgd_bound_check(spec, gen, p["n_grid"], p["replicates"], cfg.seed)
    rep = Report(cfg.name, cfg.seed, p)
    rep.summary = {"slope": out["slope"], "condition_met": out["condition_met"],
                   "constants": dict(zip(("gamma", "beta", "C0", "C2"), spec.constants()))}
    rep.raw["rows"] = [{k: v for k, v in r.items() if not isinstance(v, list)} for r in out["rows"]]
    lemma = all(r.get("last_below", True) for r in out["rows"])
    a = p["a"]
    rep.check("every measured ||nabla_i f_n|| below 2^(1+a) C0/beta n^-a", out["all_below"], "100%", out["all_below"])
    rep.check("last-position differences below 2 C0 alpha_n", lemma, "100%", lemma)
    rep.check("log-log slope of ||nabla_i f_n||", out["slope"], f"{-a} +/- {p['slope_tol']}",
              abs(out["slope"] + a) <= p["slope_tol"])
    return rep


def run_sgd_second(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(SGD)
    spec, gen = _sgd_setup(p)
    rows = []
    for n in p["n_grid"]:
        pairs = ((0, 1), (n // 2 - 1, n // 2), (n - 2, n - 1))
        est = nabla2_samples(spec, gen, n, p["replicates"], seed=child_seed(cfg.seed, 19, n), pairs=pairs)
        rows.append({"n": n, "l2": est.lq[1], "failures": est.failures})
    slope = loglog_slope(column(rows, "n"), column(rows, "l2"))
    rep = Report(cfg.name, cfg.seed, p)
    rep.summary = {"slope": slope}
    rep.raw["rows"] = rows
    lim = -2 * p["a"] + p["second_slope_slack"]
    rep.check("log-log slope of ||nabla_i nabla_j f_n||", slope, f"<= {lim}", slope <= lim)
    return rep


# --------------------------------------------------------------------------
# sieve-SGD

SIEVE = {"p": 10, "tau": 0.2, "w": 0.6, "a": 0.4, "c": 0.5, "t_grid": [250, 500, 1000, 2000],
         "replicates": 500, "sigma2": 0.25, "slope_tol": 0.3}


def run_sieve(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(SIEVE)
    spec = LearnerSpec("sieve", tau=p["tau"], w=p["w"], a=p["a"], c=p["c"])
    f = tuple(1.0 / j for j in range(1, p["p"] + 1))
    gen = RiskOracle(f, sigma2=p["sigma2"], covariates="uniform", noise="uniform")
    rows = []
    for t in p["t_grid"]:
        est = nabla_samples(spec, gen, t, "prediction", p["replicates"], child_seed(cfg.seed, 19, t), index=t - 1)
        mid = nabla_samples(spec, gen, t, "prediction", p["replicates"], child_seed(cfg.seed, 19, t), index=t // 2)
        rows.append({"t": t, "msd_last": est.lq[1] ** 2, "msd_middle": mid.lq[1] ** 2, "failures": est.failures})
    slope = loglog_slope(column(rows, "t"), column(rows, "msd_last"))
    rep = Report(cfg.name, cfg.seed, p)
    rep.summary = {"slope": slope, "slope_middle": loglog_slope(column(rows, "t"), column(rows, "msd_middle")),
                   "a_plus_2w_tau": p["a"] + 2 * p["w"] * p["tau"]}
    rep.raw["rows"] = rows
    target = -2 * p["a"]
    rep.check("log-log slope of E|nabla_i f_t(Z_t+1)|^2", slope, f"{target} +/- {p['slope_tol']}",
              abs(slope - target) <= p["slope_tol"])
    return rep


# --------------------------------------------------------------------------
# rolling validation between two sieve-SGD schedules

ROLLING = {"p": 100, "n": 5000, "replicates": 100, "xis": [0.0, 1.0, 2.0], "sigma2": 0.25,
           "good": {"tau": 0.5, "w": 0.6, "a": 0.5, "c": 0.5}, "bad": {"tau": 0.05, "w": 0.6, "a": 0.5, "c": 0.5},
           "accuracy_min": 0.8, "delay": {"A": 251.18864315095797, "a": 0.9, "B": 1.0, "b": 0.1},
           "delay_xis": [1.0, 2.0], "delay_tol": 0.2, "chunk": 10}


def _rolling_chunk(p, seed, c):
    f = np.array([1.0 / j for j in range(1, p["p"] + 1)])
    gen = RiskOracle(tuple(f), sigma2=p["sigma2"], covariates="uniform", noise="uniform")
    R = min(p["chunk"], p["replicates"] - c * p["chunk"])
    z = np.empty((R, p["n"], p["p"]))
    y = np.empty((R, p["n"]))
    for k in range(R):
        z[k], y[k] = gen.draw_arrays(stream(seed, 79, c * p["chunk"] + k), p["n"])
    specs = [LearnerSpec("sieve", **p["good"]), LearnerSpec("sieve", **p["bad"])]
    acc = rolling_batch(specs, z, y, p["xis"])  # (R, X, 2)
    return [{f"xi{x}": bool(np.argmin(acc[k, j]) == 0) for j, x in enumerate(p["xis"])} for k in range(R)]


def run_rolling(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(ROLLING)
    n_chunks = -(-p["replicates"] // p["chunk"])
    rows = [r for part in parallel_map(_rolling_chunk, p, cfg.seed, n_chunks, cfg.workers) for r in part]
    acc = {str(x): float(column(rows, f"xi{x}").mean()) for x in p["xis"]}
    dl = p["delay"]
    delays = []
    for xi in sorted(set(p["delay_xis"]) | {0.0}):
        i_star, exact, approx = delay_formula(dl["A"], dl["a"], dl["B"], dl["b"], xi)
        obs = delay_crossing(dl["A"], dl["a"], dl["B"], dl["b"], xi)
        delays.append({"xi": xi, "i_star": i_star, "formula": exact, "approx": approx, "observed": obs,
                       "rel_err": abs(obs - exact) / exact, "rel_err_approx": abs(obs - approx) / approx})
    rep = Report(cfg.name, cfg.seed, p)
    rep.summary = {"accuracy": acc, "delay": delays}
    rep.raw["replicates"] = rows
    a1 = acc.get("1.0")
    rep.check("selection accuracy at xi = 1", a1, f">= {p['accuracy_min']}", a1 is not None and a1 >= p["accuracy_min"])
    worst = max(max(d["rel_err"], d["rel_err_approx"]) for d in delays if d["xi"] in p["delay_xis"])
    rep.check("noiseless crossing versus the delay formula", worst, f"relative error <= {p['delay_tol']}",
              worst <= p["delay_tol"])
    return rep


# --------------------------------------------------------------------------
# Efron-Stein

EFRON_STEIN = {"statistic": "mean", "n": 100, "B": 10_000, "tol": 0.05}


def run_efron_stein(cfg: ExperimentConfig) -> Report:
    p = cfg.resolve(EFRON_STEIN)
    out = efron_stein_check(p["statistic"], p["n"], p["B"], cfg.seed)
    rep = Report(cfg.name, cfg.seed, p)
    rep.summary = out
    rep.check("variance / Efron-Stein bound", out["ratio"], f"1 +/- {p['tol']}", abs(out["ratio"] - 1) <= p["tol"])
    return rep

"""Command-line entry point: ``cvstab <command> [options]``.

Exit codes: 0 on success, 1 on a usage error, 2 on a data or numerical
error.  Errors go to standard error prefixed with ``error:``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .conformal import fit_cross, prediction_set
from .cv import RiskOracle, cv_losses, summarize, tau_hat
from .data import Dataset, make_fold_plan, truncate_to_multiple
from .errors import CvStabError, DataError
from .experiments import ExperimentConfig, registered, run_experiment, write_report
from .experiments.base import _plain, dumps
from .gauss import DEFAULT_DRAWS
from .learners import LearnerSpec, parse_learner, sgd_bound
from .maxmean import argmin_set, loo_statistic, select_lambda, test_max_mean
from .mcs import cvc_select, default_quantile, mcs_diff, mcs_naive
from .rollval import rolling_init, rolling_update
from .stability import nabla2_samples, nabla_samples

# flags that do not change results and are left out of the echoed command
_NOT_ECHOED = {"--threads", "--out"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------
# input

def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {row}: non-numeric cell {cell!r} in column {col + 1}") from None
    if not np.isfinite(v):
        raise DataError(f"row {row}: non-finite value {cell!r} in column {col + 1}")
    return v


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    return rows


def _is_header(row: Sequence[str]) -> bool:
    try:
        [float(c) for c in row]
        return False
    except ValueError:
        return True


def load_dataset(path: str, layout: str = "supervised"):
    """Read a CSV as a :class:`Dataset` (supervised) or an n x m array (matrix).

    Supervised files need a header; the column named ``y`` (if any) is the
    response and the remaining columns are covariates in file order.  Matrix
    files may have a header, which is skipped.
    """
    rows = _read_rows(path)
    header = None
    if layout == "supervised" or _is_header(rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise DataError(f"{path} has no data rows")
    width = len(header) if header is not None else len(rows[0])
    first = 2 if header is not None else 1
    vals = np.empty((len(rows), width))
    for k, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"row {first + k}: expected {width} fields, found {len(r)}")
        vals[k] = [_parse_float(c.strip(), first + k, j) for j, c in enumerate(r)]
    if layout == "matrix":
        return vals
    if "y" in header:
        j = header.index("y")
        z = np.delete(vals, j, axis=1)
        return Dataset(z if z.shape[1] else np.zeros((vals.shape[0], 0)), vals[:, j])
    return Dataset(vals)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _learners(text: str) -> list[LearnerSpec]:
    specs = [parse_learner(t) for t in text.split(",") if t.strip()]
    if not specs:
        raise UsageError("--learners is empty")
    return specs


def _fold_data(d: Dataset, K: int, truncate: bool, notes: list):
    if truncate:
        d, dropped = truncate_to_multiple(d, K)
        if dropped:
            msg = f"dropped {dropped} trailing samples so that K={K} divides n"
            print(f"warning: {msg}", file=sys.stderr)
            notes.append(msg)
    return d


# --------------------------------------------------------------------------
# commands; each returns (config, results, csv rows or None)

def cmd_experiment(a):
    if a.list:
        return {}, {"experiments": registered()}, None
    if not a.name:
        raise UsageError("experiment name required (use --list to see them)")
    params = {}
    if a.config:
        try:
            with open(a.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read {a.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{a.config}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(cfg, dict):
            raise DataError(f"{a.config}: expected a JSON object")
        params = cfg.get("params", cfg)
    names = registered()
    if a.name not in names:
        raise DataError(f"unknown experiment {a.name!r}; registered: {', '.join(names)}")
    rep = run_experiment(ExperimentConfig(a.name, params, a.seed, a.threads))
    return rep.config, rep, None


def cmd_cv(a):
    notes = []
    d = _fold_data(load_dataset(a.data), a.k, a.truncate, notes)
    specs = _learners(a.learners)
    plan = make_fold_plan(d.n, a.k)
    L = cv_losses(specs, d, plan, a.loss, a.seed)
    tau = None
    if a.aux:
        tau = tau_hat(specs, d, load_dataset(a.aux), plan, a.loss, a.seed)
    S = summarize(L, tau=tau)
    res = S.as_dict()
    res.update({"n": d.n, "p": d.p, "notes": notes})
    rows = [list(L.labels)] + [[repr(float(v)) for v in r] for r in L.values]
    return {"k": a.k, "learners": [s.label for s in specs], "loss": a.loss}, res, rows


def cmd_mcs(a):
    notes = []
    d = _fold_data(load_dataset(a.data), a.k, a.truncate, notes)
    specs = _learners(a.learners)
    L = cv_losses(specs, d, make_fold_plan(d.n, a.k), a.loss, a.seed)
    S = summarize(L)
    engine = default_quantile(a.draws, a.seed)
    out = {"n": d.n, "p": d.p, "r_hat": S.r_hat, "sigma_hat": S.sigma_hat, "notes": notes}
    sets = {}
    if a.method in ("naive", "both"):
        sets["naive"] = mcs_naive(S, a.beta, engine=engine)
    if a.method in ("difference", "both"):
        sets["difference"] = mcs_diff(L, a.beta, engine=engine)
    for k, cs in sets.items():
        out[k] = cs.as_dict()
    if a.complexity:
        comp = _ints(a.complexity)
        if len(comp) != len(specs):
            raise DataError(f"--complexity needs {len(specs)} values, got {len(comp)}")
        key = "naive" if "naive" in sets else "difference"
        out["cvc_selected"] = cvc_select(sets[key], comp)
    cfg = {"k": a.k, "learners": [s.label for s in specs], "loss": a.loss, "beta": a.beta, "method": a.method,
           "draws": a.draws}
    return cfg, out, None


def cmd_maxmean(a):
    X = load_dataset(a.data, "matrix")
    cands = _floats(a.candidates) if a.candidates else None
    if a.lam is None:
        sel = select_lambda(X, cands, a.epsilon, a.bootstrap, a.seed)
        lam, sel_d = sel.chosen, sel.as_dict()
    else:
        lam, sel_d = a.lam, None
    st = loo_statistic(X, lam)
    res = test_max_mean(st, a.beta)
    out = {"n": X.shape[0], "m": X.shape[1], "lambda": lam, "T_n": st.t_stat, "sigma_hat": st.sigma_hat,
           "lower_bound": res.lower_bound, "reject": res.reject, "degenerate": res.degenerate, "selection": sel_d}
    if a.argmin:
        out["argmin_set"] = list(argmin_set(X, a.beta, cands, a.epsilon, a.bootstrap, a.seed).members)
    cfg = {"beta": a.beta, "epsilon": a.epsilon, "bootstrap": a.bootstrap, "lambda": a.lam, "candidates": cands}
    return cfg, out, None


def cmd_argmin(a):
    X = load_dataset(a.data, "matrix")
    cands = _floats(a.candidates) if a.candidates else None
    res = argmin_set(X, a.beta, cands, a.epsilon, a.bootstrap, a.seed)
    out = {"n": X.shape[0], "m": X.shape[1], **res.as_dict()}
    rows = [["model", "lambda", "T_n", "sigma_hat", "lower_bound", "reject"]]
    rows += [[r["model"], r["lambda"], repr(float(r["T_n"])), repr(float(r["sigma_hat"])),
              repr(float(r["lower_bound"])), bool(r["reject"])]
             for r in res.per_model]
    return {"beta": a.beta, "epsilon": a.epsilon, "bootstrap": a.bootstrap, "candidates": cands}, out, rows


def cmd_conformal(a):
    d = load_dataset(a.data)
    spec = parse_learner(a.learner)
    z = np.asarray(_floats(a.z))
    if z.size != d.p:
        raise DataError(f"query z has {z.size} coordinates, the data has {d.p}")
    try:
        lo, hi, num = a.grid.split(":")
        grid = np.linspace(float(lo), float(hi), int(num))
    except ValueError:
        raise UsageError(f"--grid must look like lo:hi:count, got {a.grid!r}") from None
    cc = fit_cross(d, a.k, spec, a.seed)
    res = prediction_set(d, a.k, spec, z, a.alpha, grid, cc=cc)
    p = np.asarray(cc.p_value(grid, z))
    out = {"n": d.n, "p": d.p, "alpha": a.alpha, "intervals": [list(iv) for iv in res.intervals],
           "p_values": {"y": grid, "p_cc": p}}
    rows = [["y", "p_cc"]] + [[repr(float(y)), repr(float(v))] for y, v in zip(grid, p)]
    return {"k": a.k, "learner": spec.label, "z": z, "grid": a.grid}, out, rows


def cmd_rollval(a):
    d = load_dataset(a.data)
    specs = _learners(a.learners)
    state = rolling_init(specs, d.p, a.xi, a.loss)
    checkpoints = []
    for i in range(d.n):
        state = rolling_update(state, d.sample(i))
        if a.every and state.n % a.every == 0:
            checkpoints.append(state.checkpoint())
    final = state.checkpoint()
    table = checkpoints if checkpoints and checkpoints[-1]["n"] == final["n"] else checkpoints + [final]
    rows = [["n"] + [s.label for s in specs] + ["selected"]]
    rows += [[c["n"]] + [repr(v) for v in c["xi_sums"]] + [c["selected"]] for c in table]
    out = {"n": d.n, "p": d.p, "checkpoints": checkpoints, "final": final}
    return {"learners": [s.label for s in specs], "xi": a.xi, "loss": a.loss, "every": a.every}, out, rows


def cmd_stability(a):
    spec = parse_learner(a.learner)
    f_star = _floats(a.f_star)
    sz = _floats(a.sz) if a.sz else None
    gen = RiskOracle(tuple(f_star), a.sigma2, tuple(sz) if sz else None, 0.0, a.covariates, a.noise)
    out_rows, ests = [], []
    for n in _ints(a.n_grid):
        idx = n - 1 if a.index is None else a.index
        if a.order == 1:
            est = nabla_samples(spec, gen, n, a.target, a.replicates, a.seed, index=idx)
        else:
            est = nabla2_samples(spec, gen, n, a.replicates, a.seed, pairs=((max(idx - 1, 0), idx),), target=a.target)
        bound = sgd_bound(spec, n) if (spec.kind == "sgd" and a.target == "parameter" and a.order == 1) else None
        ests.append(est.as_dict() | {"bound": bound})
        for q, v in zip(est.q_grid, est.lq):
            ok = "" if bound is None else bool(np.max(np.abs(est.samples)) <= bound)
            out_rows.append([n, a.target, q, repr(v), repr(est.sw_kappa), repr(est.sw_alpha),
                             "" if bound is None else repr(bound), ok])
    rows = [["n", "target", "q", "lq", "kappa", "alpha", "bound", "pass"]] + out_rows
    cfg = {"learner": spec.label, "f_star": f_star, "sigma2": a.sigma2, "sz": sz, "covariates": a.covariates,
           "noise": a.noise, "target": a.target, "order": a.order, "replicates": a.replicates, "index": a.index}
    return cfg, {"estimates": ests}, rows


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # global flags are accepted before or after the command; below the
        # command they default to "unset" so they never mask an earlier value
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        gp = _Parser(add_help=False)
        gp.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
        gp.add_argument("--threads", type=int, default=d(1), help="worker processes for experiments")
        gp.add_argument("--out", default=d(None), help="output directory; report.json is printed when omitted")
        gp.add_argument("--format", choices=("json", "csv"), default=d("json"), help="tabular output format")
        return gp

    g = global_flags(True)
    p = _Parser(prog="cvstab", description="Stability-aware cross-validation inference.", parents=[global_flags(False)])
    p.add_argument("--version", action="version", version=f"cvstab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    e = sub.add_parser("experiment", parents=[g], help="run a named, seeded experiment")
    e.add_argument("name", nargs="?")
    e.add_argument("--config", help="JSON file of parameter overrides")
    e.add_argument("--list", action="store_true", help="list registered experiments")
    e.set_defaults(fn=cmd_experiment)

    def folded(sp):
        sp.add_argument("--data", required=True, help="supervised CSV with header (column y = response)")
        sp.add_argument("--k", type=int, default=5, help="number of folds")
        sp.add_argument("--learners", required=True, help="comma-separated learner specs, e.g. ridge:1.0,zero")
        sp.add_argument("--loss", default="squared", choices=("squared", "logistic", "abs_residual"))
        sp.add_argument("--truncate", action="store_true", help="drop n mod K trailing samples")

    c = sub.add_parser("cv", parents=[g], help="K-fold CV risk, sigma and correlation")
    folded(c)
    c.add_argument("--aux", help="auxiliary sample CSV for the tau estimate")
    c.set_defaults(fn=cmd_cv)

    m = sub.add_parser("mcs", parents=[g], help="model confidence sets and CVC selection")
    folded(m)
    m.add_argument("--beta", type=float, default=0.1)
    m.add_argument("--method", choices=("naive", "difference", "both"), default="both")
    m.add_argument("--complexity", help="comma-separated complexity per learner for CVC selection")
    m.add_argument("--draws", type=int, default=DEFAULT_DRAWS)
    m.set_defaults(fn=cmd_mcs)

    def means(sp):
        sp.add_argument("--data", required=True, help="n x m matrix CSV")
        sp.add_argument("--beta", type=float, default=0.05)
        sp.add_argument("--epsilon", type=float, default=0.05)
        sp.add_argument("--bootstrap", type=int, default=1000, help="leave-two-out triplets")
        sp.add_argument("--candidates", help="comma-separated temperatures (must start at 0)")

    mm = sub.add_parser("maxmean", parents=[g], help="softmax test for the largest mean")
    means(mm)
    mm.add_argument("--lambda", dest="lam", type=float, help="fixed temperature (skips selection)")
    mm.add_argument("--argmin", action="store_true", help="also report the argmin confidence set")
    mm.set_defaults(fn=cmd_maxmean)

    am = sub.add_parser("argmin", parents=[g], help="confidence set for the smallest mean")
    means(am)
    am.set_defaults(fn=cmd_argmin)

    cf = sub.add_parser("conformal", parents=[g], help="cross-conformal p-values and prediction set")
    cf.add_argument("--data", required=True)
    cf.add_argument("--k", type=int, default=5)
    cf.add_argument("--learner", default="ridge:1.0")
    cf.add_argument("--z", required=True, help="comma-separated query covariates")
    cf.add_argument("--alpha", type=float, default=0.1)
    cf.add_argument("--grid", required=True, help="candidate responses lo:hi:count (write --grid=-5:5:101 "
                    "when lo is negative)")
    cf.set_defaults(fn=cmd_conformal)

    rv = sub.add_parser("rollval", parents=[g], help="rolling validation over a stream")
    rv.add_argument("--data", required=True, help="supervised CSV, read in row order")
    rv.add_argument("--learners", required=True, help="online learners (zero, sgd, sieve)")
    rv.add_argument("--xi", type=float, default=1.0)
    rv.add_argument("--loss", default="squared", choices=("squared", "logistic", "abs_residual"))
    rv.add_argument("--every", type=int, default=0, help="checkpoint period in samples")
    rv.set_defaults(fn=cmd_rollval)

    st = sub.add_parser("stability", parents=[g], help="Monte Carlo stability diagnostics")
    st.add_argument("--learner", required=True)
    st.add_argument("--n-grid", default="100,200,400")
    st.add_argument("--replicates", type=int, default=200)
    st.add_argument("--target", default="parameter", choices=("parameter", "prediction", "loss", "risk"))
    st.add_argument("--order", type=int, choices=(1, 2), default=1)
    st.add_argument("--index", type=int, help="perturbed position (default: last sample)")
    st.add_argument("--f-star", default="1.0")
    st.add_argument("--sigma2", type=float, default=1.0)
    st.add_argument("--sz", help="covariate variances (default all 1)")
    st.add_argument("--covariates", choices=("gaussian", "uniform"), default="gaussian")
    st.add_argument("--noise", choices=("gaussian", "uniform"), default="gaussian")
    st.set_defaults(fn=cmd_stability)
    return p


def _echo(argv: Sequence[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        flag = tok.split("=", 1)[0]
        if flag in _NOT_ECHOED:
            skip = "=" not in tok
            continue
        out.append(tok)
    return out


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(a, argv, cfg, results, rows, elapsed):
    is_report = hasattr(results, "as_dict")
    payload = results.as_dict() if is_report else _plain(results)
    doc = {"command": _echo(argv), "config": _plain(cfg), "seed": a.seed, "results": payload, "version": __version__}
    text = dumps(doc)
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        if is_report:
            write_report(results, a.out, doc)
        else:
            with open(os.path.join(a.out, "report.json"), "w") as fh:
                fh.write(text)
        with open(os.path.join(a.out, "timing.json"), "w") as fh:
            fh.write(dumps({"seconds": elapsed}))
        if rows is not None and a.format == "csv":
            with open(os.path.join(a.out, f"{a.command}.csv"), "w", newline="") as fh:
                fh.write(_csv_text(rows))
        if is_report:
            for c in results.criteria:
                print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value} ({c.tolerance})")
    elif a.format == "csv" and rows is not None:
        sys.stdout.write(_csv_text(rows))
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if not getattr(a, "command", None):
            parser.print_usage(sys.stderr)
            raise UsageError("a command is required")
        if a.threads < 1:
            raise UsageError("--threads must be >= 1")
        t0 = time.perf_counter()
        cfg, results, rows = a.fn(a)
        _emit(a, argv, cfg, results, rows, time.perf_counter() - t0)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CvStabError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

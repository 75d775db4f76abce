"""Monte Carlo stability diagnostics.

A perturb-one difference compares a fit on ``D`` with a fit on ``D`` where a
single sample was replaced by an independent copy.  Both fits share every
other sample, the SGD ordering and any other algorithmic randomness, so the
measured difference reflects the data change alone.  SGD and sieve-SGD fits
for all replicates and variants are advanced together as one batched
trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cv import RiskOracle
from .data import Dataset
from .errors import DataError, FitError
from .learners import LearnerSpec, fit, sgd_bound, sgd_condition, sgd_order, sgd_rate, sgd_run, sieve_run
from .seeding import child_seed, stream

DEFAULT_Q = (1.0, 2.0, 4.0, 8.0)
FAILURE_BUDGET = 0.05
TARGETS = ("parameter", "prediction", "loss", "risk", "loss_diff")


def lq_norm(samples, q: float) -> float:
    """Empirical (mean |x|^q)^(1/q)."""
    x = np.abs(np.asarray(samples, dtype=float).reshape(-1))
    if x.size == 0:
        raise DataError("no samples")
    if q < 1:
        raise DataError(f"moment order must be >= 1, got {q}")
    top = x.max()
    if top == 0:
        return 0.0
    # scale by the maximum so high orders do not overflow or underflow
    return float(top * np.mean((x / top) ** q) ** (1.0 / q))


def subweibull_fit(samples, q_grid: Sequence[float] = DEFAULT_Q) -> tuple[float, float]:
    """Least-squares fit of log ||X||_q = log kappa + alpha log q, alpha floored at 0."""
    q = np.asarray(q_grid, dtype=float)
    if q.size < 3:
        raise DataError("need at least three moment orders")
    norms = np.array([lq_norm(samples, qq) for qq in q])
    if np.any(norms <= 0):
        return 0.0, 0.0
    slope, intercept = np.polyfit(np.log(q), np.log(norms), 1)
    return float(math.exp(intercept)), float(max(slope, 0.0))


def loglog_slope(x, y) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


@dataclass(frozen=True, eq=False)
class StabilityEstimate:
    samples: np.ndarray
    q_grid: tuple
    lq: tuple
    sw_kappa: float
    sw_alpha: float
    n: int
    target: str
    order: int = 1
    failures: int = 0

    @property
    def B(self) -> int:
        return int(self.samples.shape[0])

    def as_dict(self) -> dict:
        return {"n": self.n, "target": self.target, "order": self.order, "B": self.B,
                "q": list(self.q_grid), "lq": list(self.lq), "kappa": self.sw_kappa,
                "alpha": self.sw_alpha, "failures": self.failures}


def estimate(samples, n: int, target: str, order: int = 1, q_grid=DEFAULT_Q, failures: int = 0) -> StabilityEstimate:
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size < 2:
        raise DataError("need at least two replicates")
    lq = tuple(lq_norm(s, q) for q in q_grid)
    kappa, alpha = subweibull_fit(s, q_grid)
    return StabilityEstimate(s, tuple(q_grid), lq, kappa, alpha, n, target, order, failures)


# --------------------------------------------------------------------------
# coupled replicate generation and fitting

def draw_replicates(gen: RiskOracle, n: int, B: int, k: int, seed, key: int = 13):
    """Per replicate: D_n, a test point X_0 and ``k`` independent replacement samples."""
    zs, ys, z0, y0, zr, yr = [], [], [], [], [], []
    for b in range(B):
        rng = stream(seed, key, b)
        z, y = gen.draw_arrays(rng, n)
        a, c = gen.draw_arrays(rng, 1 + k)
        zs.append(z), ys.append(y), z0.append(a[0]), y0.append(c[0]), zr.append(a[1:]), yr.append(c[1:])
    return (np.array(zs), np.array(ys), np.array(z0), np.array(y0), np.array(zr), np.array(yr))


def build_variants(z, y, zr, yr, indices: Sequence[int], variants: Sequence[Sequence[int]]):
    """Stack perturbed copies: variant v replaces ``indices[k]`` by replacement ``k`` for k in ``variants[v]``."""
    B, n, p = z.shape
    V = len(variants)
    Z = np.repeat(z[:, None], V, axis=1)
    Y = np.repeat(y[:, None], V, axis=1)
    for v, ks in enumerate(variants):
        for k in ks:
            i = indices[k]
            if not 0 <= i < n:
                raise DataError(f"index {i} out of range for n={n}")
            Z[:, v, i] = zr[:, k]
            Y[:, v, i] = yr[:, k]
    return Z, Y


def fit_batch(spec: LearnerSpec, Z: np.ndarray, Y: np.ndarray, seeds: Sequence[int]):
    """Fit every (replicate, variant) pair; variants of one replicate share its seed.

    Returns ``(coef, intercept, ok)`` with shapes (B, V, p), (B, V) and (B,).
    """
    B, V, n, p = Z.shape
    if spec.kind in ("sgd", "sieve_sgd_online"):
        if spec.kind == "sgd" and spec.shuffle:
            orders = np.stack([sgd_order(n, s) for s in seeds])
            Z = np.take_along_axis(Z, orders[:, None, :, None], axis=2)
            Y = np.take_along_axis(Y, orders[:, None, :], axis=2)
        run = sgd_run if spec.kind == "sgd" else sieve_run
        with np.errstate(over="ignore", invalid="ignore"):
            coef = run(spec, Z, Y, check=False)
        ok = np.all(np.isfinite(coef), axis=(1, 2))
        return np.where(ok[:, None, None], coef, 0.0), np.zeros((B, V)), ok
    coef = np.zeros((B, V, p))
    icpt = np.zeros((B, V))
    ok = np.ones(B, dtype=bool)
    for b in range(B):
        for v in range(V):
            try:
                m = fit(spec, Dataset(Z[b, v], Y[b, v]), seeds[b])
            except FitError:
                ok[b] = False
                break
            coef[b, v], icpt[b, v] = m.coef, m.intercept
    return coef, icpt, ok


def _check_failures(ok: np.ndarray, what: str) -> int:
    bad = int((~ok).sum())
    if bad > FAILURE_BUDGET * ok.size:
        raise FitError(f"{what}: {bad} of {ok.size} replicates failed (budget {FAILURE_BUDGET:.0%})")
    return bad


def _param(spec: LearnerSpec, coef, icpt):
    return icpt[..., None] if spec.kind == "empirical_mean" else coef


def _target_values(spec, target, coef, icpt, z0, y0, gen, loss_kind="squared"):
    """Per-variant target values, shape (B, V) (or (B, V, p) for parameters)."""
    if target == "parameter":
        return _param(spec, coef, icpt)
    pred = np.einsum("bvp,bp->bv", coef, z0) + icpt
    if target == "prediction":
        return pred
    if target == "loss":
        r = y0[:, None] - pred
        return r * r if loss_kind == "squared" else np.abs(r)
    if target == "risk":
        diff = coef - np.asarray(gen.f_star)
        bias = icpt - gen.intercept
        return gen.sigma2 + bias * bias + np.einsum("bvp,p->bv", diff * diff, np.asarray(gen.sz_diag))
    raise DataError(f"unknown target {target!r}; expected one of {', '.join(TARGETS)}")


def _first_diffs(values: np.ndarray, target: str, V: int) -> np.ndarray:
    """values[:, 0] - values[:, v] for v >= 1; Euclidean norm for parameters."""
    d = values[:, :1] - values[:, 1:V]
    return np.linalg.norm(d, axis=-1) if target == "parameter" else d


def nabla_samples(spec, gen: RiskOracle, n: int, target: str = "loss", B: int = 200, seed=0,
                  index: int = 0, q_grid=DEFAULT_Q) -> StabilityEstimate:
    """Replicates of the perturb-one difference at ``index``.

    ``target='loss_diff'`` takes a pair of specs and measures the change in
    the loss difference of the two learners at the test point.
    """
    specs = tuple(spec) if target == "loss_diff" else (spec,)
    if target == "loss_diff" and len(specs) != 2:
        raise DataError("loss_diff needs exactly two learner specs")
    z, y, z0, y0, zr, yr = draw_replicates(gen, n, B, 1, seed)
    Z, Y = build_variants(z, y, zr, yr, [index], [(), (0,)])
    seeds = [child_seed(seed, 17, b) for b in range(B)]
    vals, ok = [], np.ones(B, dtype=bool)
    for s in specs:
        coef, icpt, okb = fit_batch(s, Z, Y, seeds)
        ok &= okb
        vals.append(_target_values(s, "loss" if target == "loss_diff" else target, coef, icpt, z0, y0, gen))
    values = vals[0] - vals[1] if target == "loss_diff" else vals[0]
    bad = _check_failures(ok, f"perturb-one replicates at n={n}")
    diffs = _first_diffs(values, target, 2)[ok, 0]
    return estimate(diffs, n, target, 1, q_grid, bad)


def loo_samples(spec: LearnerSpec, gen: RiskOracle, n: int, target: str = "parameter", B: int = 200, seed=0,
                index: int = 0, q_grid=DEFAULT_Q) -> StabilityEstimate:
    """Replicates of the change when sample ``index`` is removed outright."""
    z, y, z0, y0, _, _ = draw_replicates(gen, n, B, 1, seed)
    keep = np.delete(np.arange(n), index)
    seeds = [child_seed(seed, 17, b) for b in range(B)]
    out, ok = np.empty(B), np.ones(B, dtype=bool)
    for b in range(B):
        try:
            full = fit(spec, Dataset(z[b], y[b]), seeds[b])
            drop = fit(spec, Dataset(z[b, keep], y[b, keep]), seeds[b])
        except FitError:
            ok[b] = False
            out[b] = 0.0
            continue
        coef = np.stack([full.coef, drop.coef])[None]
        icpt = np.array([[full.intercept, drop.intercept]])
        vals = _target_values(spec, target, coef, icpt, z0[b:b + 1], y0[b:b + 1], gen)
        out[b] = _first_diffs(vals, target, 2)[0, 0]
    bad = _check_failures(ok, f"leave-one-out replicates at n={n}")
    return estimate(out[ok], n, target, 1, q_grid, bad)


def nabla2_samples(spec: LearnerSpec, gen: RiskOracle, n: int, B: int = 200, seed=0,
                   pairs: Sequence[tuple[int, int]] = ((0, 1),), target: str = "parameter",
                   q_grid=DEFAULT_Q, replace_same: bool = False) -> StabilityEstimate:
    """Replicates of the second difference f - f^i - f^j + f^ij.

    With several ``pairs`` each replicate records the largest magnitude over
    the pairs.  ``replace_same`` substitutes X_j by itself, which must give 0.
    """
    pairs = [tuple(int(v) for v in pr) for pr in pairs]
    idx = sorted({v for pr in pairs for v in pr})
    pos = {v: k for k, v in enumerate(idx)}
    z, y, z0, y0, zr, yr = draw_replicates(gen, n, B, len(idx), seed)
    if replace_same:
        for pr in pairs:
            zr[:, pos[pr[1]]] = z[:, pr[1]]
            yr[:, pos[pr[1]]] = y[:, pr[1]]
    variants = []
    for i, j in pairs:
        variants += [(), (pos[i],), (pos[j],), (pos[i], pos[j])]
    Z, Y = build_variants(z, y, zr, yr, idx, variants)
    seeds = [child_seed(seed, 17, b) for b in range(B)]
    coef, icpt, ok = fit_batch(spec, Z, Y, seeds)
    vals = _target_values(spec, target, coef, icpt, z0, y0, gen)
    bad = _check_failures(ok, f"second-order replicates at n={n}")
    out = np.zeros(B)
    for k in range(len(pairs)):
        v = vals[:, 4 * k:4 * k + 4]
        sec = v[:, 0] - v[:, 1] - v[:, 2] + v[:, 3]
        mag = np.linalg.norm(sec, axis=-1) if target == "parameter" else np.abs(sec)
        out = np.maximum(out, mag)
    return estimate(out[ok], n, target, 2, q_grid, bad)


def sgd_positions(n: int) -> tuple[int, ...]:
    """0-based SGD positions of the first, middle and last samples."""
    return tuple(sorted({0, n // 2 - 1 if n >= 2 else 0, n - 1}))


def sgd_bound_check(spec: LearnerSpec, gen: RiskOracle, n_grid: Sequence[int], B: int = 50, seed=0,
                    positions=None) -> dict:
    """Compare measured parameter stability of SGD with the closed-form bound.

    Uses the SGD stream order directly (``shuffle`` is switched off), so an
    index is a position in the update sequence.  For each n, every replicate
    perturbs each tested position separately.
    """
    spec = spec.with_(shuffle=False) if spec.kind == "sgd" else spec
    rows = []
    for n in n_grid:
        pos = sgd_positions(n) if positions is None else tuple(positions)
        z, y, z0, y0, zr, yr = draw_replicates(gen, n, B, len(pos), child_seed(seed, 19, n))
        Z, Y = build_variants(z, y, zr, yr, pos, [()] + [(k,) for k in range(len(pos))])
        coef, icpt, ok = fit_batch(spec, Z, Y, [0] * B)
        bad = _check_failures(ok, f"SGD stability replicates at n={n}")
        norms = _first_diffs(_param(spec, coef, icpt), "parameter", len(pos) + 1)[ok]  # (B, P)
        per_rep = norms.max(axis=1)
        row = {"n": int(n), "positions": [int(p) for p in pos], "failures": bad,
               "max_norm": float(per_rep.max()), "l2_norm": lq_norm(per_rep, 2),
               "per_position_l2": [lq_norm(norms[:, k], 2) for k in range(len(pos))]}
        if spec.kind == "sgd":
            lhs, rhs = sgd_condition(spec, n)
            bound = sgd_bound(spec, n)
            _, _, c0, _ = spec.constants()
            last = norms[:, pos.index(n - 1)] if (n - 1) in pos else None
            row.update({"bound": bound, "all_below": bool(np.all(norms <= bound)),
                        "condition_lhs": lhs, "condition_rhs": rhs, "condition_met": bool(lhs >= rhs)})
            if last is not None:
                lemma = 2 * c0 * sgd_rate(spec, n)
                row.update({"last_max": float(last.max()), "last_bound": float(lemma),
                            "last_below": bool(np.all(last <= lemma))})
        rows.append(row)
    ns = [r["n"] for r in rows]
    l2 = [r["l2_norm"] for r in rows]
    report = {"rows": rows, "slope": loglog_slope(ns, l2) if len(rows) > 1 and min(l2) > 0 else None}
    if spec.kind == "sgd":
        report["all_below"] = all(r["all_below"] for r in rows)
        report["condition_met"] = all(r["condition_met"] for r in rows)
    return report


# --------------------------------------------------------------------------
# Efron-Stein

STATISTICS = ("mean", "max", "constant")


def _stat(name: str, x: np.ndarray) -> np.ndarray:
    if name == "mean":
        return x.mean(axis=-1)
    if name == "max":
        return x.max(axis=-1)
    return np.zeros(x.shape[:-1])


def efron_stein_check(statistic: str, n: int, B: int = 10_000, seed=0, sigma: float = 1.0) -> dict:
    """Monte Carlo variance of h(D_n) against half the summed squared perturb-one differences.

    ``mean`` and ``constant`` use N(0, sigma^2) samples; ``max`` uses U(0, 1).
    The bound sums over all n indices in every replicate.
    """
    if statistic not in STATISTICS:
        raise DataError(f"unknown statistic {statistic!r}; expected one of {', '.join(STATISTICS)}")
    hs, sq = np.empty(B), np.empty(B)
    eye = np.eye(n, dtype=bool)
    for b in range(B):
        rng = stream(seed, 23, b)
        if statistic == "max":
            x, xp = rng.uniform(size=n), rng.uniform(size=n)
        else:
            x, xp = sigma * rng.standard_normal(n), sigma * rng.standard_normal(n)
        h = _stat(statistic, x)
        hj = _stat(statistic, np.where(eye, xp[:, None], x[None, :]))
        hs[b] = h
        sq[b] = np.sum((h - hj) ** 2)
    var = float(np.var(hs, ddof=1))
    bound = float(0.5 * sq.mean())
    ratio = 1.0 if var == 0 and bound == 0 else (var / bound if bound > 0 else math.inf)
    return {"statistic": statistic, "n": n, "B": B, "mc_variance": var, "bound": bound, "ratio": ratio}

"""Cross-validation model confidence sets and parsimonious selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cv import CvSummary, LossMatrix, cv_risk, diff_losses, gamma_hat, sigma_hat
from .errors import DataError
from .gauss import DEFAULT_DRAWS, QuantileRequest, psd_repair, quantile
from .seeding import child_seed

QuantileFn = Callable[[np.ndarray, float, str, int], float]


def default_quantile(draws: int = DEFAULT_DRAWS, seed=0) -> QuantileFn:
    """Quantile engine with a fixed draw budget; ``key`` separates call sites."""

    def engine(gamma, beta, sided, key):
        return quantile(QuantileRequest(psd_repair(gamma), beta, sided, draws), child_seed(seed, 3, key))

    return engine


@dataclass(frozen=True)
class ConfidenceSet:
    members: tuple
    beta: float
    quantile_used: float
    method: str
    per_model: list = field(default_factory=list)
    warnings: tuple = ()

    def __contains__(self, r) -> bool:
        return r in self.members

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "beta": self.beta,
            "members": list(self.members),
            "quantile": self.quantile_used,
            "per_model": self.per_model,
            "warnings": list(self.warnings),
        }


def _exact_argmin(values: np.ndarray) -> tuple:
    return tuple(int(r) for r in np.flatnonzero(values == values.min()))


def mcs_naive(summary: CvSummary, beta: float, n: Optional[int] = None, engine: Optional[QuantileFn] = None,
              seed=0, t: Optional[float] = None) -> ConfidenceSet:
    """Keep every model whose lower confidence bound is not dominated.

    Model r stays iff R_r - sigma_r t / sqrt(n) <= min_s (R_s + sigma_s t / sqrt(n)),
    with t the upper-beta quantile of max |N(0, Gamma)| over models with
    positive variance.  Passing ``t`` skips the Monte Carlo step.
    """
    n = summary.n if n is None else n
    r_hat, sig = np.asarray(summary.r_hat), np.asarray(summary.sigma_hat)
    m = r_hat.shape[0]
    ok = sig > 0
    if not ok.any():
        members = _exact_argmin(r_hat)
        per = [{"model": r, "lower": float(r_hat[r]), "upper": float(r_hat[r])} for r in range(m)]
        return ConfidenceSet(members, beta, 0.0, "naive", per, ("all standard deviations are zero; exact argmin returned",))
    if t is None:
        engine = engine or default_quantile(seed=seed)
        idx = np.flatnonzero(ok)
        t = engine(np.asarray(summary.gamma_hat)[np.ix_(idx, idx)], beta, "abs", 0)
    half = sig * t / np.sqrt(n)
    lower, upper = r_hat - half, r_hat + half
    cut = upper.min()
    members = tuple(int(r) for r in np.flatnonzero(lower <= cut))
    per = [{"model": r, "lower": float(lower[r]), "upper": float(upper[r])} for r in range(m)]
    warn = () if ok.all() else (f"zero-variance models {list(np.flatnonzero(~ok))} enter without slack",)
    return ConfidenceSet(members, beta, float(t), "naive", per, warn)


def diff_bounds(L: LossMatrix, r: int, beta: float, engine: QuantileFn, n: Optional[int] = None,
                u: Optional[float] = None) -> tuple[float, float]:
    """max over s != r of the lower bound on R_r - R_s, and the quantile used."""
    n = L.n if n is None else n
    D = diff_losses(L, r)
    mean, sig = cv_risk(D), sigma_hat(D)
    ok = sig > 0
    if u is None:
        if ok.any():
            g, _ = gamma_hat(D, sig)
            idx = np.flatnonzero(ok)
            u = engine(g[np.ix_(idx, idx)], beta, "one_sided", 1 + r)
        else:
            u = 0.0
    bound = mean - np.where(ok, sig * u / np.sqrt(n), 0.0)
    return float(bound.max()), float(u)


def mcs_diff(L: LossMatrix, beta: float, n: Optional[int] = None, engine: Optional[QuantileFn] = None,
             seed=0, u: Optional[float] = None) -> ConfidenceSet:
    """Difference-based confidence set: keep r iff every difference bound is <= 0.

    Difference columns with zero spread (identical or shifted models) are
    compared through their raw mean difference.
    """
    if L.m < 2:
        return ConfidenceSet((0,), beta, 0.0, "difference", [{"model": 0, "max_bound": 0.0, "quantile": 0.0}])
    engine = engine or default_quantile(seed=seed)
    members, per = [], []
    for r in range(L.m):
        b, q = diff_bounds(L, r, beta, engine, n, u)
        per.append({"model": r, "max_bound": b, "quantile": q})
        if b <= 0:
            members.append(r)
    q_used = max(p["quantile"] for p in per)
    return ConfidenceSet(tuple(members), beta, q_used, "difference", per)


def cvc_select(cs: ConfidenceSet, complexity: Sequence[int] | Callable[[int], int]) -> int:
    """Least complex member; ties go to the smallest model index."""
    if not cs.members:
        raise DataError("cannot select from an empty confidence set")
    cost = complexity if callable(complexity) else (lambda r: complexity[r])
    return min(cs.members, key=lambda r: (cost(r), r))

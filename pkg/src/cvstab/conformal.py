"""Split and cross-conformal p-values with absolute-residual scores.

Ranks use the strict inequality ``calibration score < query score``
throughout.  Fitted fold scores are kept sorted so each p-value is a
``searchsorted`` call, and a whole y-grid is scored against fits computed
once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cv import fold_models
from .data import Dataset, FoldPlan, make_fold_plan
from .errors import DataError
from .learners import LearnerSpec, Model, fit


def _query(query):
    y, z = query
    return np.asarray(y, dtype=float), np.asarray(z, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class SplitConformal:
    model: Model
    scores: np.ndarray  # sorted calibration scores

    @property
    def n_te(self) -> int:
        return self.scores.shape[0]

    def p_value(self, y, z) -> np.ndarray | float:
        s = np.abs(np.asarray(y, dtype=float) - float(self.model.predict(np.reshape(z, (1, -1)))[0]))
        p = (np.searchsorted(self.scores, s, side="left") + 1.0) / (self.n_te + 1.0)
        return p if np.ndim(p) else float(p)


def fit_split(d: Dataset, n_tr: int, spec: LearnerSpec, seed=0) -> SplitConformal:
    if not 1 <= n_tr < d.n:
        raise DataError(f"fitting size must satisfy 1 <= n_tr < n={d.n}, got {n_tr}")
    if d.y is None:
        raise DataError("conformal scores need a response")
    model = fit(spec, d.take(np.arange(n_tr)), seed)
    cal = d.take(np.arange(n_tr, d.n))
    return SplitConformal(model, np.sort(np.abs(cal.y - model.predict(cal.z))))


def split_threshold(n_te: int, alpha: float) -> float:
    """Largest split p-value kept at level alpha: ceil((n_te + 1)(1 - alpha)) / (n_te + 1).

    Keeping ``p <= split_threshold`` gives finite-sample coverage >= 1 - alpha
    under exchangeability.
    """
    if not 0 <= alpha <= 1:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    k = math.ceil((n_te + 1) * (1 - alpha) - 1e-9)
    return k / (n_te + 1)


def split_conformal_p(d: Dataset, n_tr: int, spec: LearnerSpec, query, seed=0):
    """(#{calibration scores < query score} + 1) / (n_te + 1)."""
    y, z = _query(query)
    return fit_split(d, n_tr, spec, seed).p_value(y, z)


@dataclass(frozen=True, eq=False)
class CrossConformal:
    models: tuple
    scores: tuple  # per fold, sorted held-out scores
    plan: FoldPlan

    def fold_p_values(self, y, z) -> np.ndarray:
        """Array of shape (K,) + shape(y) with the per-fold p-values."""
        y = np.asarray(y, dtype=float)
        zz = np.reshape(z, (1, -1))
        out = []
        for model, sc in zip(self.models, self.scores):
            s = np.abs(y - float(model.predict(zz)[0]))
            out.append(np.searchsorted(sc, s, side="left") / sc.shape[0])
        return np.array(out)

    def p_value(self, y, z):
        p = self.fold_p_values(y, z).mean(axis=0)
        return p if np.ndim(p) else float(p)


def fit_cross(d: Dataset, K: int, spec: LearnerSpec, seed=0, plan: Optional[FoldPlan] = None) -> CrossConformal:
    if d.y is None:
        raise DataError("conformal scores need a response")
    if K < 2:
        raise DataError("cross-conformal needs K >= 2; use the split version otherwise")
    plan = plan or make_fold_plan(d.n, K)
    models = [row[0] for row in fold_models([spec], d, plan, seed)]
    scores = tuple(np.sort(np.abs(d.y[idx] - m.predict(d.z[idx]))) for m, idx in zip(models, plan.folds))
    return CrossConformal(tuple(models), scores, plan)


def cross_conformal_p(d: Dataset, K: int, spec: LearnerSpec, query, seed=0):
    """Average over folds of #{held-out scores < query score} / n_te."""
    y, z = _query(query)
    return fit_cross(d, K, spec, seed).p_value(y, z)


def merge_intervals(grid: np.ndarray, keep: np.ndarray) -> list[tuple[float, float]]:
    """Maximal runs of kept grid points as closed [first, last] intervals."""
    if not keep.any():
        return []
    k = keep.astype(np.int8)
    edges = np.diff(np.concatenate([[0], k, [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return [(float(grid[a]), float(grid[b])) for a, b in zip(starts, stops)]


@dataclass(frozen=True)
class ConformalResult:
    alpha: float
    intervals: list
    p_values: Optional[list] = None
    K: Optional[int] = None

    def contains(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.intervals)

    def as_dict(self) -> dict:
        out = {"alpha": self.alpha, "K": self.K, "intervals": [list(iv) for iv in self.intervals]}
        if self.p_values is not None:
            out["p_values"] = self.p_values
        return out


def prediction_set(d: Dataset, K: int, spec: LearnerSpec, z, alpha: float, y_grid, seed=0,
                   cc: Optional[CrossConformal] = None) -> ConformalResult:
    """Grid points with p_cc(y, z) <= 1 - alpha, merged into intervals."""
    grid = np.asarray(y_grid, dtype=float).reshape(-1)
    if grid.size < 2:
        raise DataError("the y-grid needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise DataError("the y-grid must be strictly increasing")
    if not 0 <= alpha <= 1:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    cc = cc or fit_cross(d, K, spec, seed)
    p = np.asarray(cc.p_value(grid, z))
    return ConformalResult(alpha, merge_intervals(grid, p <= 1 - alpha), None, cc.plan.K)

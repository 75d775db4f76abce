"""Sample containers, K-fold plans and dataset surgery.

Indices are 0-based throughout the package: sample ``i`` is row ``i`` and
fold ``k`` is ``plan.folds[k]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


class Sample(NamedTuple):
    """One observation: covariates ``z`` and an optional response ``y``."""

    z: np.ndarray
    y: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered, immutable collection of samples.

    ``z`` has shape (n, p); ``y`` is a length-n vector or ``None`` for
    unsupervised panels such as the many-means matrix.
    """

    z: np.ndarray
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if self.y is None else z.reshape(len(z), -1)
        if z.ndim != 2:
            raise DataError(f"covariates must be a 2-d array, got shape {z.shape}")
        if z.shape[0] < 1:
            raise DataError("a dataset needs at least one sample")
        if not np.all(np.isfinite(z)):
            raise DataError("covariates contain non-finite values")
        object.__setattr__(self, "z", _frozen(z))
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).reshape(-1)
            if y.shape[0] != z.shape[0]:
                raise DataError(f"response has {y.shape[0]} rows but covariates have {z.shape[0]}")
            if not np.all(np.isfinite(y)):
                raise DataError("response contains non-finite values")
            object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def supervised(self) -> bool:
        return self.y is not None

    def __len__(self) -> int:
        return self.n

    def sample(self, i: int) -> Sample:
        return Sample(self.z[i], None if self.y is None else float(self.y[i]))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.z[idx], None if self.y is None else self.y[idx])

    def equals(self, other: "Dataset") -> bool:
        if self.supervised != other.supervised or self.z.shape != other.z.shape:
            return False
        same_y = self.y is None or np.array_equal(self.y, other.y)
        return bool(np.array_equal(self.z, other.z) and same_y)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    K: int
    n_te: int
    n_tr: int
    fold_of: np.ndarray
    folds: tuple

    @property
    def n(self) -> int:
        return self.n_te * self.K

    def train_indices(self, k: int) -> np.ndarray:
        _check_fold(self, k)
        return np.flatnonzero(self.fold_of != k)


def make_fold_plan(n: int, K: int, shuffle_seed: Optional[int] = None) -> FoldPlan:
    """Contiguous equal-size folds, optionally after a seeded shuffle.

    Without a seed, fold ``k`` holds indices ``k*n_te, ..., (k+1)*n_te - 1``.
    With a seed, the index order is permuted first and then blocked.
    """
    n, K = int(n), int(K)
    if not 1 <= K <= n:
        raise DataError(f"fold count K={K} must satisfy 1 <= K <= n={n}")
    if n % K:
        raise DataError(
            f"K={K} does not divide n={n}: folds must have equal size n/K "
            f"(drop {n % K} trailing samples or choose another K)"
        )
    n_te = n // K
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    folds = tuple(_frozen_int(np.sort(order[k * n_te:(k + 1) * n_te])) for k in range(K))
    fold_of = np.empty(n, dtype=int)
    for k, idx in enumerate(folds):
        fold_of[idx] = k
    fold_of.flags.writeable = False
    return FoldPlan(K=K, n_te=n_te, n_tr=n - n_te, fold_of=fold_of, folds=folds)


def _frozen_int(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=int, copy=True)
    a.flags.writeable = False
    return a


def _check_fold(plan: FoldPlan, k: int) -> None:
    if not (isinstance(k, (int, np.integer)) and 0 <= k < plan.K):
        raise DataError(f"fold id {k!r} out of range for K={plan.K}")


def perturb_one(d: Dataset, i: int, x: Sample) -> Dataset:
    """Copy of ``d`` with sample ``i`` replaced by ``x``."""
    if not (isinstance(i, (int, np.integer)) and 0 <= i < d.n):
        raise DataError(f"index {i!r} out of range for n={d.n}")
    xz = np.asarray(x.z, dtype=float).reshape(-1)
    if xz.shape[0] != d.p:
        raise DataError(f"replacement has dimension {xz.shape[0]}, dataset has {d.p}")
    if d.supervised and x.y is None:
        raise DataError("replacement sample lacks a response")
    z = np.array(d.z)
    z[i] = xz
    y = None
    if d.supervised:
        y = np.array(d.y)
        y[i] = float(x.y)
    return Dataset(z, y)


def leave_out(d: Dataset, fold: int, plan: FoldPlan) -> Dataset:
    """Training data for fold ``fold``: every sample outside it, in order."""
    if plan.n != d.n:
        raise DataError(f"plan covers {plan.n} samples, dataset has {d.n}")
    _check_fold(plan, fold)
    if plan.n_tr == 0:
        raise DataError("K=1 leaves no training samples")
    return d.take(plan.train_indices(fold))


def truncate_to_multiple(d: Dataset, K: int) -> tuple[Dataset, int]:
    """Drop the ``n mod K`` trailing samples; returns the dataset and the count dropped."""
    drop = d.n % K
    if drop == 0:
        return d, 0
    if d.n - drop < K:
        raise DataError(f"n={d.n} is too small for K={K}")
    return d.take(np.arange(d.n - drop)), drop

"""K-fold cross-validation loss matrices, risk estimates and their variance.

The loss matrix has one row per sample and one column per learner; entry
``(i, r)`` is the loss of learner ``r`` fitted without the fold containing
``i``, evaluated at sample ``i``.  Everything inferential downstream (model
confidence sets, the CLT checks) is a function of this matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, FoldPlan, leave_out, perturb_one
from .errors import DataError, FitError
from .learners import LearnerSpec, Model, fit, losses
from .seeding import child_seed


@dataclass(frozen=True, eq=False)
class LossMatrix:
    values: np.ndarray
    plan: Optional[FoldPlan] = None
    labels: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"loss matrix must be a nonempty 2-d array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("loss matrix has non-finite entries")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        labels = tuple(self.labels) or tuple(f"m{r}" for r in range(v.shape[1]))
        if len(labels) != v.shape[1]:
            raise DataError("one label per loss-matrix column is required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        header = ",".join(self.labels)
        np.savetxt(path, self.values, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass(frozen=True, eq=False)
class CvSummary:
    r_hat: np.ndarray
    sigma_hat: np.ndarray
    gamma_hat: np.ndarray
    n: int
    labels: tuple = ()
    excluded: tuple = ()
    r_bar: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    tau_hat: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        out = {
            "labels": list(self.labels),
            "n": self.n,
            "r_hat": self.r_hat.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "gamma_hat": self.gamma_hat.tolist(),
            "zero_variance": list(self.excluded),
        }
        for key in ("r_bar", "mu", "tau_hat"):
            val = getattr(self, key)
            if val is not None:
                out[key] = np.asarray(val).tolist()
        return out


@dataclass(frozen=True)
class RiskOracle:
    """Linear-model generator y = intercept + z'f* + noise with known risk.

    Covariates are independent with variances ``sz_diag``, either Gaussian
    or uniform on a symmetric interval; noise is Gaussian or uniform with
    variance ``sigma2``.
    """

    f_star: tuple
    sigma2: float = 1.0
    sz_diag: Optional[tuple] = None
    intercept: float = 0.0
    covariates: str = "gaussian"
    noise: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "f_star", tuple(float(v) for v in self.f_star))
        sz = (1.0,) * len(self.f_star) if self.sz_diag is None else tuple(float(v) for v in self.sz_diag)
        if len(sz) != len(self.f_star):
            raise DataError("sz_diag and f_star must have the same length")
        if self.sigma2 < 0 or min(sz, default=0.0) < 0:
            raise DataError("oracle variances must be nonnegative")
        for fam in (self.covariates, self.noise):
            if fam not in ("gaussian", "uniform"):
                raise DataError(f"unknown distribution family {fam!r}")
        object.__setattr__(self, "sz_diag", sz)

    @property
    def p(self) -> int:
        return len(self.f_star)

    def _draw(self, rng, shape, var, family):
        sd = np.sqrt(var)
        if family == "gaussian":
            return rng.standard_normal(shape) * sd
        return rng.uniform(-1.0, 1.0, shape) * (sd * np.sqrt(3.0))

    def draw_arrays(self, rng: np.random.Generator, size) -> tuple[np.ndarray, np.ndarray]:
        """Covariates of shape ``size + (p,)`` and responses of shape ``size``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        z = self._draw(rng, size + (self.p,), np.asarray(self.sz_diag), self.covariates)
        eps = self._draw(rng, size, self.sigma2, self.noise)
        y = self.intercept + z @ np.asarray(self.f_star) + eps
        return z, y

    def draw(self, rng: np.random.Generator, n: int) -> Dataset:
        z, y = self.draw_arrays(rng, n)
        return Dataset(z, y)

    def risk(self, model: Model) -> float:
        """Squared-loss risk of ``model`` on a fresh draw."""
        diff = model.coef - np.asarray(self.f_star)
        b = model.intercept - self.intercept
        return float(self.sigma2 + b * b + np.sum(np.asarray(self.sz_diag) * diff * diff))

    def excess_risk(self, model: Model) -> float:
        return self.risk(model) - self.sigma2


def fold_seed(seed, k: int, r: int) -> int:
    return child_seed(seed, 1, k, r)


def fold_models(specs: Sequence[LearnerSpec], d: Dataset, plan: FoldPlan, seed=0) -> list[list[Model]]:
    """models[k][r]: learner ``r`` fitted on the data outside fold ``k``."""
    if plan.n != d.n:
        raise DataError(f"fold plan covers {plan.n} samples but the dataset has {d.n}")
    out = []
    for k in range(plan.K):
        train = leave_out(d, k, plan)
        row = []
        for r, spec in enumerate(specs):
            try:
                row.append(fit(spec, train, fold_seed(seed, k, r)))
            except FitError as exc:
                raise FitError(f"fold {k}, learner {r} ({spec.label}): {exc}") from exc
        out.append(row)
    return out


def _fill_losses(models, d: Dataset, plan: FoldPlan, loss: str) -> np.ndarray:
    vals = np.empty((d.n, len(models[0])))
    for k, idx in enumerate(plan.folds):
        z, y = d.z[idx], d.y[idx] if d.y is not None else None
        for r, model in enumerate(models[k]):
            vals[idx, r] = losses(model, z, y, loss)
    return vals


def cv_losses(specs: Sequence[LearnerSpec], d: Dataset, plan: FoldPlan, loss: str = "squared", seed=0) -> LossMatrix:
    """K-fold held-out losses, using exactly K * m fits."""
    specs = list(specs)
    if not specs:
        raise DataError("at least one learner is required")
    models = fold_models(specs, d, plan, seed)
    return LossMatrix(_fill_losses(models, d, plan, loss), plan, tuple(s.label for s in specs))


def cv_risk(L: LossMatrix) -> np.ndarray:
    return L.values.mean(axis=0)


def sigma_hat(L: LossMatrix) -> np.ndarray:
    """Standard deviation of the held-out losses with 1/n normalization."""
    dev = L.values - cv_risk(L)
    return np.sqrt(np.mean(dev * dev, axis=0))


def gamma_hat(L: LossMatrix, sigma: Optional[np.ndarray] = None) -> tuple[np.ndarray, tuple]:
    """Correlation matrix of the held-out loss columns.

    Returns ``(gamma, excluded)``.  Columns with zero standard deviation are
    listed in ``excluded`` and get zero rows and columns in ``gamma``
    (including the diagonal); other entries are clamped to [-1, 1] and the
    included diagonal is exactly 1.
    """
    sigma = sigma_hat(L) if sigma is None else np.asarray(sigma, dtype=float)
    dev = L.values - cv_risk(L)
    cov = dev.T @ dev / L.n
    ok = sigma > 0
    gamma = np.zeros_like(cov)
    s = sigma[ok]
    gamma[np.ix_(ok, ok)] = np.clip(cov[np.ix_(ok, ok)] / np.outer(s, s), -1.0, 1.0)
    gamma = 0.5 * (gamma + gamma.T)
    idx = np.flatnonzero(ok)
    gamma[idx, idx] = 1.0
    return gamma, tuple(int(r) for r in np.flatnonzero(~ok))


def diff_losses(L: LossMatrix, r: int) -> LossMatrix:
    """Columns ``L[:, r] - L[:, s]`` for every ``s != r``, in index order."""
    if L.m < 2:
        raise DataError("differences need at least two models")
    if not 0 <= r < L.m:
        raise DataError(f"model index {r} out of range for m={L.m}")
    others = [s for s in range(L.m) if s != r]
    vals = L.values[:, [r]] - L.values[:, others]
    labels = tuple(f"{L.labels[r]}-{L.labels[s]}" for s in others)
    return LossMatrix(vals, L.plan, labels)


def summarize(L: LossMatrix, r_bar=None, mu=None, tau=None) -> CvSummary:
    r = cv_risk(L)
    s = sigma_hat(L)
    g, excl = gamma_hat(L, s)
    return CvSummary(r, s, g, L.n, L.labels, excl, r_bar, mu, tau)


def tau_hat(specs: Sequence[LearnerSpec], d: Dataset, aux: Dataset, plan: FoldPlan, loss: str = "squared", seed=0) -> np.ndarray:
    """Auxiliary-sample estimate of the perturb-one standard deviation.

    Sample ``i`` of ``d`` (for i < n_aux) is replaced by auxiliary sample
    ``i``; tau^2 = (1 / (2 n_aux)) * sum_i (n * change in R_cv)^2.  The fit
    for the fold holding ``i`` is reused (its training data is untouched);
    the other K - 1 folds are refitted.
    """
    specs = list(specs)
    if aux.n < 1:
        raise DataError("need at least one auxiliary sample")
    if aux.n > d.n:
        raise DataError(f"n_aux={aux.n} exceeds n={d.n}")
    if aux.p != d.p or aux.supervised != d.supervised:
        raise DataError("auxiliary samples must match the dataset layout")
    models = fold_models(specs, d, plan, seed)
    base = _fill_losses(models, d, plan, loss).mean(axis=0)
    acc = np.zeros(len(specs))
    for i in range(aux.n):
        di = perturb_one(d, i, aux.sample(i))
        ki = plan.fold_of[i]
        new_models = []
        for k in range(plan.K):
            if k == ki:
                new_models.append(models[k])
                continue
            train = leave_out(di, k, plan)
            new_models.append([fit(s, train, fold_seed(seed, k, r)) for r, s in enumerate(specs)])
        risk_i = _fill_losses(new_models, di, plan, loss).mean(axis=0)
        acc += (d.n * (risk_i - base)) ** 2
    return np.sqrt(acc / (2 * aux.n))


def bar_target(specs: Sequence[LearnerSpec], d: Dataset, plan: FoldPlan, oracle: Optional[RiskOracle], seed=0) -> np.ndarray:
    """Average over folds of the true risk of each leave-one-fold-out fit."""
    if oracle is None:
        raise DataError("the averaged-risk target needs a risk oracle; it is unobservable on real data")
    models = fold_models(list(specs), d, plan, seed)
    return np.array([[oracle.risk(m) for m in row] for row in models]).mean(axis=0)


def single_split_risk(spec: LearnerSpec, d: Dataset, n_tr: int, loss: str = "squared", seed=0) -> float:
    """Fit on the first ``n_tr`` samples and average the loss over the rest."""
    if not 1 <= n_tr < d.n:
        raise DataError(f"training size must satisfy 1 <= n_tr < n, got {n_tr}")
    model = fit(spec, d.take(np.arange(n_tr)), seed)
    test = d.take(np.arange(n_tr, d.n))
    return float(losses(model, test.z, test.y, loss).mean())

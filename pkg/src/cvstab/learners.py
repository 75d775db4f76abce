"""Fitting procedures, online updates and losses.

Every learner is a linear predictor ``z -> z @ coef + intercept``.  Batch
learners map a :class:`~cvstab.data.Dataset` to a :class:`Model`; the two
online learners (plain SGD and sieve-SGD) are driven one sample at a time
through :class:`OnlineState`, and their batch ``fit`` is just the online loop
run over the whole dataset.

The SGD cores are written against arrays with arbitrary leading batch
dimensions, so coupled trajectories (a dataset and its perturbed copies) can
be advanced together in one Python loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, Sample
from .errors import DataError, FitError

KINDS = (
    "constant_zero",
    "empirical_mean",
    "ridge_closed_form",
    "sgd",
    "truncated_series",
    "sieve_sgd_online",
)
ALIASES = {
    "zero": "constant_zero",
    "mean": "empirical_mean",
    "ridge": "ridge_closed_form",
    "sgd": "sgd",
    "series": "truncated_series",
    "sieve": "sieve_sgd_online",
}
ONLINE_KINDS = ("constant_zero", "sgd", "sieve_sgd_online")
LOSS_KINDS = ("squared", "logistic", "abs_residual")


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative description of a fitting procedure.

    Only the fields relevant to ``kind`` are read.  For ``sgd`` the
    constants ``gamma``, ``beta``, ``C0`` and ``C2`` default to the closed
    forms for the chosen objective given the radii ``r_x`` and ``r_f``
    (see :func:`ridge_constants` and :func:`logistic_constants`).
    """

    kind: str = "constant_zero"
    # ridge (closed form and SGD objective)
    lam: float = 0.0
    support: Optional[tuple] = None
    # sgd
    objective: str = "ridge"
    a: float = 0.5
    gamma: Optional[float] = None
    beta: Optional[float] = None
    C0: Optional[float] = None
    C2: Optional[float] = None
    r_x: float = 1.0
    r_f: float = 1.0
    step_cap: Optional[float] = None
    shuffle: bool = True
    # truncated series
    J: int = 0
    # sieve-SGD
    tau: float = 0.5
    w: float = 0.0
    c: float = 1.0
    name: Optional[str] = None

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise DataError(f"unknown learner kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        if self.support is not None:
            object.__setattr__(self, "support", tuple(int(j) for j in self.support))
        if self.lam < 0:
            raise DataError(f"ridge penalty must be nonnegative, got {self.lam}")
        if kind == "sgd":
            if self.objective not in ("ridge", "logistic"):
                raise DataError(f"sgd objective must be ridge or logistic, got {self.objective!r}")
            if not 0 < self.a < 1:
                raise DataError(f"learning-rate exponent a must lie in (0, 1), got {self.a}")
            g, b, _, _ = self.constants()
            if g > b:
                raise DataError(f"strong convexity gamma={g} exceeds smoothness beta={b}")
            if b <= 0:
                raise DataError("smoothness constant beta must be positive")
        if kind == "truncated_series" and self.J < 0:
            raise DataError(f"truncation level J must be nonnegative, got {self.J}")
        if kind == "sieve_sgd_online":
            if not 0 <= self.a < 1:
                raise DataError(f"sieve rate exponent a must lie in [0, 1), got {self.a}")
            if self.w < 0 or self.tau < 0 or self.c <= 0:
                raise DataError("sieve parameters need w >= 0, tau >= 0 and c > 0")

    @property
    def label(self) -> str:
        """Compact spec string; ``parse_learner(spec.label)`` rebuilds the learner."""
        if self.name:
            return self.name
        if self.kind == "ridge_closed_form":
            s = f"ridge:{self.lam:g}"
            return s if self.support is None else f"ridge:lam={self.lam:g};support=" + "+".join(map(str, self.support))
        if self.kind == "sgd":
            return f"sgd:objective={self.objective};lam={self.lam:g};a={self.a:g}"
        if self.kind == "truncated_series":
            return f"series:{self.J}"
        if self.kind == "sieve_sgd_online":
            return f"sieve:tau={self.tau:g};w={self.w:g};a={self.a:g};c={self.c:g}"
        return {"constant_zero": "zero", "empirical_mean": "mean"}[self.kind]

    def constants(self) -> tuple[float, float, float, Optional[float]]:
        """Resolved (gamma, beta, C0, C2) for the SGD objective."""
        base = (ridge_constants if self.objective == "ridge" else logistic_constants)(self.r_x, self.r_f, self.lam)
        g = base["gamma"] if self.gamma is None else float(self.gamma)
        b = base["beta"] if self.beta is None else float(self.beta)
        c0 = base["C0"] if self.C0 is None else float(self.C0)
        c2 = base.get("C2") if self.C2 is None else float(self.C2)
        return g, b, c0, c2

    def with_(self, **kw) -> "LearnerSpec":
        return replace(self, **kw)


def ridge_constants(r_x: float, r_f: float, lam: float) -> dict:
    """Constants of 0.5 (y - z'f)^2 + 0.5 lam |f|^2 on balls of radii r_x, r_f."""
    return {"gamma": lam, "C0": r_x**2 * (1 + r_f) + lam * r_f, "beta": r_x**2 + lam, "C2": 0.0}


def logistic_constants(r_x: float, r_f: float, lam: float) -> dict:
    """Constants of -y z'f + log(1 + exp(z'f)) + lam |f|^2 on balls of radii r_x, r_f."""
    return {
        "gamma": 2 * lam,
        "C0": r_x**2 + math.log1p(math.exp(r_x * r_f)) / r_f + lam * r_f,
        "beta": r_x / r_f + lam,
        "C2": r_x**2 / (4 * r_f),
    }


def sgd_condition(spec: LearnerSpec, n: int) -> tuple[float, float]:
    """Both sides of the sample-size condition for the SGD stability bound.

    Returns ``(lhs, rhs)`` with lhs = gamma/(beta+gamma) and
    rhs = a(1-a)/(1-2^-(1-a)) * log n / n^(1-a); the bound applies when lhs >= rhs.
    """
    g, b, _, _ = spec.constants()
    a = spec.a
    rhs = a * (1 - a) / (1 - 2 ** (-(1 - a))) * math.log(n) / n ** (1 - a)
    return g / (b + g), rhs


def sgd_bound(spec: LearnerSpec, n: int) -> float:
    """First-order parameter stability bound 2^(1+a) C0 / beta * n^-a."""
    _, b, c0, _ = spec.constants()
    return 2 ** (1 + spec.a) * c0 / b * n ** (-spec.a)


def parse_learner(text: str) -> LearnerSpec:
    """Parse the compact ``kind:params`` grammar.

    ``params`` is either one positional value (``ridge:1.0`` sets ``lam``,
    ``series:5`` sets ``J``, ``sgd:logistic`` sets ``objective``) or a
    ``;``-separated list of ``key=value`` pairs, e.g.
    ``sieve:tau=0.5;w=0.6;a=0.4;c=0.15``.  A support set is written with
    ``+``: ``ridge:lam=0;support=0+2``.
    """
    text = text.strip()
    if not text:
        raise DataError("empty learner spec")
    kind, _, rest = text.partition(":")
    kind = ALIASES.get(kind.strip(), kind.strip())
    if kind not in KINDS:
        raise DataError(f"unknown learner kind {kind!r} in {text!r}")
    kw: dict = {"kind": kind}
    rest = rest.strip()
    if rest and "=" not in rest:
        positional = {"ridge_closed_form": "lam", "truncated_series": "J", "sgd": "objective"}
        if kind not in positional:
            raise DataError(f"learner {kind!r} takes no positional parameter ({text!r})")
        rest = f"{positional[kind]}={rest}"
    fields = LearnerSpec.__dataclass_fields__
    for part in filter(None, (p.strip() for p in rest.split(";"))):
        key, eq, val = part.partition("=")
        key = key.strip()
        if not eq or key not in fields or key == "kind":
            raise DataError(f"bad learner parameter {part!r} in {text!r}")
        kw[key] = _coerce(key, val.strip(), text)
    return LearnerSpec(**kw)


def _coerce(key: str, val: str, text: str):
    try:
        if key in ("objective", "name"):
            return val
        if key == "support":
            return tuple(int(v) for v in val.split("+") if v != "")
        if key == "J":
            return int(val)
        if key == "shuffle":
            if val.lower() not in ("true", "false", "1", "0"):
                raise ValueError(val)
            return val.lower() in ("true", "1")
        return float(val)
    except ValueError:
        raise DataError(f"cannot parse {key}={val!r} in learner spec {text!r}") from None


@dataclass(frozen=True, eq=False)
class Model:
    """A fitted linear predictor."""

    coef: np.ndarray
    intercept: float = 0.0
    spec: LearnerSpec = field(default_factory=LearnerSpec)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(coef)) or not math.isfinite(self.intercept):
            raise FitError(f"{self.spec.label}: non-finite coefficients")
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)

    @property
    def params(self) -> np.ndarray:
        """The parameter vector used by stability diagnostics."""
        if self.spec.kind == "empirical_mean":
            return np.array([self.intercept])
        return self.coef

    def predict(self, z) -> np.ndarray:
        # Row-wise products keep each prediction independent of how many rows
        # are scored together (a BLAS matrix-vector call is not).
        return (np.asarray(z, dtype=float) * self.coef).sum(axis=-1) + self.intercept


# --------------------------------------------------------------------------
# objectives

def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def objective_value(spec: LearnerSpec, f, z, y):
    f, z = np.asarray(f, float), np.asarray(z, float)
    s = np.sum(z * f, axis=-1)
    if spec.objective == "ridge":
        return 0.5 * (y - s) ** 2 + 0.5 * spec.lam * np.sum(f * f, axis=-1)
    return -y * s + np.logaddexp(0.0, s) + spec.lam * np.sum(f * f, axis=-1)


def objective_grad(spec: LearnerSpec, f, z, y):
    """Gradient in ``f``; broadcasts over leading batch dimensions."""
    s = np.sum(z * f, axis=-1)
    if spec.objective == "ridge":
        return -(y - s)[..., None] * z + spec.lam * f
    return (_sigmoid(s) - y)[..., None] * z + 2.0 * spec.lam * f


def sgd_rate(spec: LearnerSpec, t) -> np.ndarray | float:
    _, b, _, _ = spec.constants()
    rate = np.asarray(t, dtype=float) ** (-spec.a) / b
    if spec.step_cap is not None:
        rate = np.minimum(rate, spec.step_cap)
    return rate if np.ndim(rate) else float(rate)


def sgd_run(spec: LearnerSpec, z: np.ndarray, y: np.ndarray, f0=None, t0: int = 0, check: bool = True) -> np.ndarray:
    """Run SGD through the sample axis of ``z`` (shape (..., n, p)) in order.

    Step ``t0 + k + 1`` consumes ``z[..., k, :]``.  Returns the final iterate;
    with ``check`` a non-finite result raises instead of being returned.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    f = np.zeros(z.shape[:-2] + z.shape[-1:]) if f0 is None else np.array(f0, dtype=float)
    n = z.shape[-2]
    rates = sgd_rate(spec, np.arange(t0 + 1, t0 + n + 1))
    rates = np.atleast_1d(rates)
    for k in range(n):
        f = f - rates[k] * objective_grad(spec, f, z[..., k, :], y[..., k])
    if check and not np.all(np.isfinite(f)):
        raise FitError(f"{spec.label}: SGD diverged to non-finite coefficients")
    return f


def sieve_width(i: int, tau: float) -> int:
    """J_i = ceil(i^tau), with exact integer powers not pushed up by rounding."""
    x = float(i) ** tau
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return max(int(r), 1) if i >= 1 else 0
    return int(math.ceil(x))


def sieve_run(spec: LearnerSpec, z: np.ndarray, y: np.ndarray, f0=None, i0: int = 0, check: bool = True) -> np.ndarray:
    """Sieve-SGD through the sample axis of ``z`` (shape (..., n, p)).

    Step ``i0 + k + 1`` consumes ``z[..., k, :]`` with shrinkage
    ``j^-2w`` on the first ``J_i`` coordinates and zero elsewhere.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    p = z.shape[-1]
    f = np.zeros(z.shape[:-2] + (p,)) if f0 is None else np.array(f0, dtype=float)
    shrink = np.arange(1, p + 1, dtype=float) ** (-2.0 * spec.w)
    for k in range(z.shape[-2]):
        i = i0 + k + 1
        J = sieve_width(i, spec.tau)
        if J > p:
            raise DataError(f"sieve step {i} needs J_i={J} basis coordinates but z has only {p}")
        rate = spec.c * i ** (-spec.a)
        zk = z[..., k, :J]
        resid = y[..., k] - np.sum(f * z[..., k, :], axis=-1)
        f[..., :J] += (rate * resid)[..., None] * shrink[:J] * zk
    if check and not np.all(np.isfinite(f)):
        raise FitError(f"{spec.label}: sieve-SGD diverged to non-finite coefficients")
    return f


def sgd_step(f: Model, x: Sample, t: int, spec: LearnerSpec) -> Model:
    """One SGD update f - alpha_t * grad(f; x) with alpha_t = t^-a / beta."""
    if t < 1:
        raise DataError(f"SGD step index must be >= 1, got {t}")
    if x.y is None:
        raise DataError("SGD needs a response")
    z = np.asarray(x.z, dtype=float).reshape(1, -1)
    coef = sgd_run(spec, z, np.array([x.y]), f0=f.coef, t0=t - 1)
    return Model(coef, 0.0, spec)


def sieve_step(f: Model, x: Sample, i: int, spec: LearnerSpec) -> Model:
    """One sieve-SGD update at step ``i``."""
    if i < 1:
        raise DataError(f"sieve step index must be >= 1, got {i}")
    if x.y is None:
        raise DataError("sieve-SGD needs a response")
    z = np.asarray(x.z, dtype=float).reshape(1, -1)
    coef = sieve_run(spec, z, np.array([x.y]), f0=f.coef, i0=i - 1)
    return Model(coef, 0.0, spec)


# --------------------------------------------------------------------------
# batch fitting

def _ridge_solve(z: np.ndarray, y: np.ndarray, lam: float, label: str) -> np.ndarray:
    n = z.shape[0]
    A = z.T @ z / n + lam * np.eye(z.shape[1])
    rhs = z.T @ y / n
    if lam == 0.0:
        # with no penalty a rank-deficient design has no unique solution
        if z.shape[1] > 0 and np.linalg.matrix_rank(z) < z.shape[1]:
            raise FitError(f"{label}: singular normal equations (rank-deficient design with lam=0)")
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise FitError(f"{label}: singular normal equations") from None


def sgd_order(n: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def fit(spec: LearnerSpec, d: Dataset, seed=0) -> Model:
    """Fit ``spec`` on ``d``; deterministic in (spec, d, seed)."""
    n, p = d.n, d.p
    kind = spec.kind
    if kind == "constant_zero":
        return Model(np.zeros(p), 0.0, spec)
    if d.y is None:
        raise DataError(f"{spec.label} needs a response column")
    y = d.y
    if kind == "empirical_mean":
        return Model(np.zeros(p), float(np.mean(y)), spec)
    if kind == "ridge_closed_form":
        coef = np.zeros(p)
        cols = np.arange(p) if spec.support is None else np.asarray(spec.support, dtype=int)
        if cols.size and (cols.min() < 0 or cols.max() >= p):
            raise DataError(f"{spec.label}: support index outside 0..{p - 1}")
        if cols.size:
            coef[cols] = _ridge_solve(d.z[:, cols], y, spec.lam, spec.label)
        return Model(coef, 0.0, spec)
    if kind == "truncated_series":
        J = min(spec.J, p)
        coef = np.zeros(p)
        coef[:J] = (y[:, None] * d.z[:, :J]).mean(axis=0)
        return Model(coef, 0.0, spec)
    if kind == "sgd":
        order = sgd_order(n, seed) if spec.shuffle else np.arange(n)
        return Model(sgd_run(spec, d.z[order], y[order]), 0.0, spec)
    # sieve-SGD is an online procedure: consume in the given stream order
    return Model(sieve_run(spec, d.z, y), 0.0, spec)


# --------------------------------------------------------------------------
# losses

def losses(model: Model, z, y, kind: str = "squared") -> np.ndarray:
    """Vectorized loss of ``model`` over rows of ``z`` with responses ``y``."""
    if kind not in LOSS_KINDS:
        raise DataError(f"unknown loss {kind!r}; expected one of {', '.join(LOSS_KINDS)}")
    if y is None:
        raise DataError(f"{kind} loss needs a response")
    s = model.predict(np.atleast_2d(z))
    y = np.asarray(y, dtype=float).reshape(-1)
    if kind == "squared":
        return (y - s) ** 2
    if kind == "abs_residual":
        return np.abs(y - s)
    return -y * s + np.logaddexp(0.0, s)


def loss(model: Model, x: Sample, kind: str = "squared") -> float:
    if x.y is None:
        raise DataError(f"{kind} loss needs a response")
    return float(losses(model, np.asarray(x.z, float).reshape(1, -1), [x.y], kind)[0])


# --------------------------------------------------------------------------
# online estimators

@dataclass(frozen=True, eq=False)
class OnlineState:
    """Current iterate of an online learner and the number of samples seen.

    The state holds no sample history, so memory is independent of ``i``.
    """

    spec: LearnerSpec
    coef: np.ndarray
    i: int = 0

    @property
    def model(self) -> Model:
        return Model(self.coef, 0.0, self.spec)


def online_init(spec: LearnerSpec, p: int) -> OnlineState:
    if spec.kind not in ONLINE_KINDS:
        raise DataError(f"{spec.label} is not an online learner")
    coef = np.zeros(p)
    coef.flags.writeable = False
    return OnlineState(spec, coef, 0)


def online_update(state: OnlineState, x: Sample) -> OnlineState:
    spec = state.spec
    i = state.i + 1
    if spec.kind == "constant_zero":
        return OnlineState(spec, state.coef, i)
    if spec.kind == "sgd":
        coef = sgd_step(state.model, x, i, spec).coef
    else:
        coef = sieve_step(state.model, x, i, spec).coef
    return OnlineState(spec, coef, i)

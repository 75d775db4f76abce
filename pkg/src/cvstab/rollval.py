"""Rolling validation for streams of online estimators.

Each arriving sample is first scored by every candidate's current iterate and
only then consumed by the candidates.  With ``i`` samples already seen
(``i >= 1``), the new sample adds ``i**xi * loss`` to each accumulator; the
very first sample has no model to score and only updates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Sample
from .errors import DataError, FitError
from .learners import LearnerSpec, OnlineState, loss, online_init, online_update, sgd_run, sieve_run


def neumaier_add(s, c, x):
    """One step of compensated summation; works elementwise on arrays."""
    t = s + x
    c = c + np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
    return t, c


@dataclass(frozen=True, eq=False)
class RollingState:
    states: tuple
    xi: float = 1.0
    n: int = 0
    sums: tuple = ()
    comps: tuple = ()
    loss_kind: str = "squared"

    @property
    def xi_sums(self) -> np.ndarray:
        return np.array(self.sums) + np.array(self.comps)

    def checkpoint(self) -> dict:
        return {"n": self.n, "xi_sums": self.xi_sums.tolist(), "selected": select(self)}


def rolling_init(specs: Sequence[LearnerSpec], p: int, xi: float = 1.0, loss_kind: str = "squared") -> RollingState:
    if xi < 0:
        raise DataError(f"weight exponent must be nonnegative, got {xi}")
    specs = list(specs)
    if not specs:
        raise DataError("need at least one candidate")
    zeros = (0.0,) * len(specs)
    return RollingState(tuple(online_init(s, p) for s in specs), float(xi), 0, zeros, zeros, loss_kind)


def rolling_update(state: RollingState, x: Sample) -> RollingState:
    i = state.n
    sums, comps = list(state.sums), list(state.comps)
    if i >= 1:
        w = float(i) ** state.xi
        for r, st in enumerate(state.states):
            try:
                l = loss(st.model, x, state.loss_kind)
            except Exception as exc:
                raise FitError(f"candidate {r}: loss evaluation failed: {exc}") from exc
            s, c = neumaier_add(sums[r], comps[r], w * l)
            sums[r], comps[r] = float(s), float(c)
    new_states = tuple(online_update(st, x) for st in state.states)
    return RollingState(new_states, state.xi, i + 1, tuple(sums), tuple(comps), state.loss_kind)


def select(state: RollingState) -> int:
    """Candidate with the smallest accumulator; ties go to the smallest index."""
    return int(np.argmin(state.xi_sums))


def rolling_batch(specs: Sequence[LearnerSpec], z: np.ndarray, y: np.ndarray, xis: Sequence[float]) -> np.ndarray:
    """Vectorized rolling validation over independent streams.

    ``z`` has shape (R, n, p) and ``y`` shape (R, n).  Returns accumulators
    of shape (R, len(xis), m) for squared loss, identical in arithmetic to
    repeated :func:`rolling_update` calls.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    R, n, p = z.shape
    xis = np.asarray(xis, dtype=float)
    m = len(specs)
    coefs = np.zeros((m, R, p))
    sums = np.zeros((R, xis.size, m))
    comps = np.zeros_like(sums)
    for i in range(n):
        zi, yi = z[:, i, :], y[:, i]
        if i >= 1:
            resid = yi[None, :] - np.einsum("mrp,rp->mr", coefs, zi)
            l = (resid * resid).T  # (R, m)
            w = float(i) ** xis  # (X,)
            sums, comps = neumaier_add(sums, comps, w[None, :, None] * l[:, None, :])
        for r, spec in enumerate(specs):
            if spec.kind == "constant_zero":
                continue
            run = sieve_run if spec.kind == "sieve_sgd_online" else sgd_run
            kw = {"i0": i} if spec.kind == "sieve_sgd_online" else {"t0": i}
            coefs[r] = run(spec, zi[:, None, :], yi[:, None], f0=coefs[r], **kw)
    return sums + comps


def delay_crossing(A: float, a: float, B: float, b: float, xi: float, n_max: int = 10**7) -> int:
    """First step at which noiseless weighted sums favour the faster-decaying risk.

    Risks A i^-a (a > b, A > B) and B i^-b are fed directly as losses with
    weights i^xi; returns the smallest i with sum_{j<=i} j^xi (A j^-a - B j^-b) < 0.
    """
    if not (0 <= b < a <= 1 and A > B > 0):
        raise DataError("need 0 <= b < a <= 1 and A > B > 0")
    step = 1 << 16
    total, comp = 0.0, 0.0
    for start in range(1, n_max + 1, step):
        j = np.arange(start, min(start + step, n_max + 1), dtype=float)
        terms = j**xi * (A * j ** (-a) - B * j ** (-b))
        part = np.cumsum(terms) + total
        hit = np.flatnonzero(part < 0)
        if hit.size:
            return int(j[hit[0]])
        total = float(part[-1])
    raise DataError(f"no crossing within {n_max} steps")


def delay_formula(A: float, a: float, B: float, b: float, xi: float) -> tuple[float, float, float]:
    """(i_star, exact integral crossing, first-order approximation i_star (1 + 1/(xi+1-a)))."""
    i_star = (A / B) ** (1.0 / (a - b))
    exact = i_star * ((xi + 1 - b) / (xi + 1 - a)) ** (1.0 / (a - b))
    return i_star, exact, i_star * (1 + 1.0 / (xi + 1 - a))

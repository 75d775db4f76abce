"""Monte Carlo quantiles of max and max-abs of correlated Gaussian vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .seeding import stream

DEFAULT_DRAWS = 200_000
ACCEPTANCE_DRAWS = 1_000_000
BATCH = 1 << 16


@dataclass(frozen=True)
class QuantileRequest:
    gamma: np.ndarray
    beta: float
    sided: str = "abs"
    draws: int = DEFAULT_DRAWS

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise DataError(f"level beta must lie in (0, 1), got {self.beta}")
        if self.sided not in ("abs", "one_sided"):
            raise DataError(f"sided must be 'abs' or 'one_sided', got {self.sided!r}")
        if self.draws < 10_000:
            raise DataError(f"need at least 10^4 Monte Carlo draws, got {self.draws}")


def psd_repair(gamma, return_asymmetry: bool = False):
    """Clip negative eigenvalues and rescale to unit diagonal.

    Rows with a zero diagonal stay zero.  With ``return_asymmetry`` the
    largest absolute asymmetry of the input is returned as a second value.
    """
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DataError(f"correlation matrix must be square, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise DataError("correlation matrix has non-finite entries")
    asym = float(np.max(np.abs(g - g.T))) if g.size else 0.0
    g = 0.5 * (g + g.T)
    vals, vecs = np.linalg.eigh(g)
    if vals.size and vals.min() < 0:
        g = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        d = np.sqrt(np.clip(np.diag(g), 0.0, None))
        keep = d > 0
        scale = np.where(keep, 1.0 / np.where(keep, d, 1.0), 0.0)
        g = g * np.outer(scale, scale)
        g = 0.5 * (g + g.T)
        np.fill_diagonal(g, keep.astype(float))
    return (g, asym) if return_asymmetry else g


def sqrt_factor(gamma) -> np.ndarray:
    """Symmetric square root via the eigen decomposition (works when singular)."""
    g = np.asarray(gamma, dtype=float)
    try:
        vals, vecs = np.linalg.eigh(0.5 * (g + g.T))
    except np.linalg.LinAlgError as exc:
        raise DataError(f"eigen decomposition failed: {exc}") from exc
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def max_draws(gamma, sided: str, draws: int, seed) -> np.ndarray:
    """Sorted sample of max (or max |.|) over ``draws`` Gaussian vectors.

    Batches use their own stream keyed by batch number, so the sample is the
    same however the batches are scheduled.
    """
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    m = g.shape[0]
    root = sqrt_factor(g)
    out = np.empty(draws)
    for b, start in enumerate(range(0, draws, BATCH)):
        size = min(BATCH, draws - start)
        x = stream(seed, 7, b).standard_normal((size, m)) @ root
        out[start:start + size] = np.abs(x).max(axis=1) if sided == "abs" else x.max(axis=1)
    out.sort()
    return out


def upper_index(beta: float, draws: int) -> int:
    """1-based index ceil((1 - beta) * draws), robust to float round-off."""
    x = (1.0 - beta) * draws
    r = round(x)
    k = r if abs(x - r) <= 1e-9 * max(1.0, x) else math.ceil(x)
    return min(max(int(k), 1), draws)


def quantile_from_sorted(sample: np.ndarray, beta: float) -> float:
    return float(sample[upper_index(beta, sample.shape[0]) - 1])


def quantile(req: QuantileRequest, seed=0) -> float:
    """Upper ``beta`` quantile of max|N(0, gamma)| or max N(0, gamma)."""
    g = np.atleast_2d(np.asarray(req.gamma, dtype=float))
    if not np.any(g):
        return 0.0
    return quantile_from_sorted(max_draws(g, req.sided, req.draws, seed), req.beta)

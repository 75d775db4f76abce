"""Experiment configuration, reports and the order-preserving parallel map."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class ExperimentConfig:
    """A named experiment with its parameters.

    ``params`` overrides the experiment's own defaults key by key; unknown
    keys are rejected so typos do not silently fall back to defaults.
    """

    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1

    def resolve(self, defaults: dict) -> dict:
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise DataError(f"experiment {self.name!r} has no parameters {unknown}; known: {sorted(defaults)}")
        out = dict(defaults)
        out.update(self.params)
        reps = out.get("replicates")
        if reps is not None and int(reps) < 1:
            raise DataError("replicates must be >= 1")
        return out


@dataclass
class Criterion:
    name: str
    value: Any
    tolerance: str
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "pass": bool(self.passed)}


@dataclass
class Report:
    name: str
    seed: int
    config: dict
    summary: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def check(self, name: str, value, tolerance: str, passed: bool) -> bool:
        self.criteria.append(Criterion(name, _plain(value), tolerance, bool(passed)))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def as_dict(self) -> dict:
        return {
            "experiment": self.name,
            "seed": self.seed,
            "config": _plain(self.config),
            "summary": _plain(self.summary),
            "criteria": [c.as_dict() for c in self.criteria],
            "pass": self.passed,
        }


def _plain(x):
    """Convert numpy scalars and arrays to JSON-ready Python values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _run_chunk(args):
    fn, params, seed, idx = args
    return [fn(params, seed, i) for i in idx]


def parallel_map(fn: Callable, params: dict, seed: int, n_tasks: int, workers: int = 1) -> list:
    """``[fn(params, seed, i) for i in range(n_tasks)]`` spread over processes.

    Each task draws its randomness from its own stream keyed by (seed, i),
    so the returned list is identical for any worker count.
    """
    if workers <= 1 or n_tasks <= 1:
        return [fn(params, seed, i) for i in range(n_tasks)]
    n_chunks = min(n_tasks, workers * 4)
    bounds = np.linspace(0, n_tasks, n_chunks + 1).astype(int)
    chunks = [list(range(a, b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_chunk, [(fn, params, seed, c) for c in chunks]))
    return [r for part in parts for r in part]


def ks_normal(x) -> float:
    from scipy.stats import kstest

    return float(kstest(np.sort(np.asarray(x, float)), "norm").statistic)


def ks_uniform(x) -> float:
    from scipy.stats import kstest

    return float(kstest(np.sort(np.asarray(x, float)), "uniform").statistic)


def column(rows: Sequence[dict], key: str) -> np.ndarray:
    return np.array([r[key] for r in rows])

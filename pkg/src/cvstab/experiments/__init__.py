"""Named, seeded experiments; the acceptance suite runs every one of them."""
from __future__ import annotations

import csv
import os
from typing import Callable

from ..errors import DataError
from . import cv_experiments as _cv
from . import inference as _inf
from . import online as _on
from .base import Criterion, ExperimentConfig, Report, _plain, dumps, parallel_map

REGISTRY: dict[str, tuple[Callable[[ExperimentConfig], Report], dict]] = {
    "example31_identity": (_cv.run_example31, _cv.EXAMPLE31),
    "cv_oracle_equivalence": (_cv.run_oracle_equivalence, _cv.ORACLE),
    "cv_clt_random_centering": (_cv.run_clt, _cv.CLT),
    "variance_estimation": (_cv.run_variance, _cv.VARIANCE),
    "pairwise_split": (_cv.run_pairwise, _cv.PAIRWISE),
    "gauss_quantiles": (_inf.run_gauss, _inf.GAUSS),
    "mcs_coverage": (_inf.run_mcs, _inf.MCS),
    "cvc_selection": (_inf.run_cvc, _inf.CVC),
    "fig53_histograms": (_inf.run_fig53, _inf.FIG53),
    "argmin_coverage": (_inf.run_argmin, _inf.ARGMIN),
    "cross_conformal": (_inf.run_conformal, _inf.CONFORMAL),
    "sgd_first_order": (_on.run_sgd_first, _on.SGD),
    "sgd_second_order": (_on.run_sgd_second, _on.SGD),
    "sieve_stability": (_on.run_sieve, _on.SIEVE),
    "rolling_validation": (_on.run_rolling, _on.ROLLING),
    "efron_stein": (_on.run_efron_stein, _on.EFRON_STEIN),
}


def registered() -> list[str]:
    return sorted(REGISTRY)


def defaults(name: str) -> dict:
    _lookup(name)
    return dict(REGISTRY[name][1])


def _lookup(name: str):
    if name not in REGISTRY:
        raise DataError(f"unknown experiment {name!r}; registered: {', '.join(registered())}")
    return REGISTRY[name][0]


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run a registered experiment; the report depends only on (name, params, seed)."""
    return _lookup(cfg.name)(cfg)


def write_report(report: Report, out_dir: str, document: dict | None = None) -> list[str]:
    """report.json plus one CSV per raw table; returns the written paths.

    ``document`` replaces the plain report as the JSON content (the CLI wraps
    the report with the command echo and version).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "report.json")]
    with open(paths[0], "w") as fh:
        fh.write(dumps(report.as_dict() if document is None else document))
    for key, rows in sorted(report.raw.items()):
        if not rows:
            continue
        path = os.path.join(out_dir, f"{key}.csv")
        cols = list(rows[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([_cell(r[c]) for c in cols])
        paths.append(path)
    return paths


def _cell(v):
    v = _plain(v)
    return repr(v) if isinstance(v, float) else v


__all__ = ["REGISTRY", "Criterion", "ExperimentConfig", "Report", "defaults", "dumps", "parallel_map",
           "registered", "run_experiment", "write_report"]

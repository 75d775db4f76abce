"""Standardized max-mean statistics under the null, as text histograms.

Compares the softmax cross-validated statistic with the hard-max
cross-validated statistic and the softmax statistic without
cross-validation, on the same draws.  The raw samples are written to
``<out>/standardized.csv``.

    python3 scripts/fig53_histograms.py --out results/fig53
"""
import argparse
import csv

import numpy as np

from cvstab.experiments import ExperimentConfig, run_experiment, write_report


def text_hist(x, lo=-4.0, hi=4.0, bins=16, width=50):
    counts, edges = np.histogram(np.clip(x, lo, hi), bins=bins, range=(lo, hi))
    top = counts.max()
    return "\n".join(f"{a:+.1f} {'#' * int(round(width * c / top))}" for a, c in zip(edges[:-1], counts))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/fig53")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args()
    rep = run_experiment(ExperimentConfig("fig53_histograms", seed=a.seed, workers=a.workers))
    write_report(rep, a.out)
    with open(f"{a.out}/standardized.csv") as fh:
        rows = list(csv.DictReader(fh))
    for key in rows[0]:
        if key.startswith("lambda"):
            continue
        x = np.array([float(r[key]) for r in rows])
        print(f"\n{key}  (KS {rep.summary['ks'][key]:.3f})")
        print(text_hist(x))


if __name__ == "__main__":
    main()

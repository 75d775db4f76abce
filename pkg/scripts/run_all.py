"""Run every registered experiment and write one report directory per experiment.

    python3 scripts/run_all.py --out results --workers 1 --seed 0
"""
import argparse
import json
import sys
import time

from cvstab.experiments import ExperimentConfig, registered, run_experiment, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="subset of experiment names")
    a = ap.parse_args()
    names = a.only or registered()
    failed = []
    for name in names:
        t0 = time.perf_counter()
        rep = run_experiment(ExperimentConfig(name, seed=a.seed, workers=a.workers))
        write_report(rep, f"{a.out}/{name}")
        secs = time.perf_counter() - t0
        print(f"{'PASS' if rep.passed else 'FAIL'}  {name}  ({secs:.1f} s)")
        for c in rep.criteria:
            print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {json.dumps(c.value)} ({c.tolerance})")
        if not rep.passed:
            failed.append(name)
    print(f"{len(names) - len(failed)}/{len(names)} experiments passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

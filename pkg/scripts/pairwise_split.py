"""Error rate of CV when choosing between the zero model and the sample mean.

The true mean is zero, so preferring the sample mean is always a mistake.
Prints the Monte Carlo error rate for single splits (against the closed
form), standard K-fold and reversed K-fold (train on one fold, test on the
rest).

    python3 scripts/pairwise_split.py --replicates 2000
"""
import argparse

from cvstab.experiments import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args()
    rep = run_experiment(ExperimentConfig("pairwise_split", {"replicates": a.replicates}, a.seed, a.workers))
    s = rep.summary
    print("single split       n_te/n_tr   error   closed form")
    for r in s["single_split"]:
        print(f"  n_tr={r['n_tr']:<5}       {r['n_te_over_n_tr']:8.3f}   {r['error_rate']:.3f}   {r['theory']:.3f}")
    print("standard K-fold")
    for r in s["kfold"]:
        print(f"  K={r['K']:<3}              {r['n_te_over_n_tr']:8.3f}   {r['error_rate']:.3f}")
    print("reversed K-fold")
    for r in s["reversed_kfold"]:
        print(f"  K={r['K']:<3}              {r['n_te_over_n_tr']:8.3f}   {r['error_rate']:.3f}")
    print("half split by n")
    for r in s["by_n_half_split"]:
        print(f"  n={r['n']:<6}                        {r['error_rate']:.3f}")
    for c in rep.criteria:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")


if __name__ == "__main__":
    main()

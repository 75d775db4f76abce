import json
import math

import numpy as np
import pytest

from cvstab.errors import DataError
from cvstab.experiments import ExperimentConfig, defaults, registered, run_experiment, write_report
from cvstab.experiments.base import dumps, parallel_map
from cvstab.experiments.cv_experiments import single_split_error

SMALL = {
    "example31_identity": {"replicates": 5},
    "cv_oracle_equivalence": {"K_grid": [2, 3]},
    "pairwise_split": {"replicates": 50, "n": 200, "n_tr_grid": [180, 100, 20], "n_grid": [100, 200], "K_grid": [2, 10]},
    "efron_stein": {"B": 500},
    "variance_estimation": {"seeds": 2, "n": 500},
}


def test_registry_lists_every_experiment():
    names = registered()
    assert len(names) == 16 and names == sorted(names)
    assert "example31_identity" in names and "fig53_histograms" in names


def test_unknown_experiment_lists_registered():
    with pytest.raises(DataError, match="registered: "):
        run_experiment(ExperimentConfig("nope"))


def test_config_resolution():
    d = defaults("efron_stein")
    assert ExperimentConfig("efron_stein", {"n": 5}).resolve(d)["n"] == 5
    with pytest.raises(DataError, match="no parameters"):
        ExperimentConfig("efron_stein", {"bogus": 1}).resolve(d)
    with pytest.raises(DataError):
        ExperimentConfig("x", {"replicates": 0}).resolve({"replicates": 10})


def test_parallel_map_order_independent_of_workers():
    fn = _square
    assert parallel_map(fn, {}, 0, 9, 1) == parallel_map(fn, {}, 0, 9, 3) == [i * i for i in range(9)]


def _square(p, seed, i):
    return i * i


@pytest.mark.parametrize("name", sorted(SMALL))
def test_small_runs_emit_criteria(name):
    rep = run_experiment(ExperimentConfig(name, SMALL[name]))
    out = rep.as_dict()
    assert out["experiment"] == name and isinstance(out["pass"], bool)
    assert all({"name", "value", "tolerance", "pass"} <= set(c) for c in out["criteria"])
    json.loads(dumps(out))


def test_example31_identity_small():
    assert run_experiment(ExperimentConfig("example31_identity", SMALL["example31_identity"])).passed


def test_pairwise_single_split_matches_theory():
    reps = 1500
    rep = run_experiment(ExperimentConfig("pairwise_split", {"replicates": reps, "n": 200, "n_tr_grid": [180, 100, 20],
                                                             "n_grid": [200], "K_grid": [2]}))
    for row in rep.summary["single_split"]:
        p = row["theory"]
        assert p == pytest.approx(single_split_error(row["n_tr"], 200 - row["n_tr"]))
        assert abs(row["error_rate"] - p) <= 3 * math.sqrt(p * (1 - p) / reps)


def test_pairwise_zero_noise_reports_ties():
    rep = run_experiment(ExperimentConfig("pairwise_split", dict(SMALL["pairwise_split"], sigma=0.0)))
    assert "note" in rep.summary and rep.criteria == []
    assert all(r["error_rate"] == 1.0 for r in rep.summary["single_split"])


def test_single_split_error_limits():
    assert single_split_error(100, 1e-9) == pytest.approx(0.5, abs=1e-5)
    assert single_split_error(1, 1e9) == pytest.approx(0.0, abs=1e-4)


def test_reports_identical_across_worker_counts(tmp_path):
    for name in ("example31_identity", "pairwise_split"):
        texts = []
        for w in (1, 2):
            rep = run_experiment(ExperimentConfig(name, SMALL[name], seed=3, workers=w))
            d = tmp_path / f"{name}{w}"
            write_report(rep, str(d))
            texts.append((d / "report.json").read_bytes())
        assert texts[0] == texts[1]


def test_write_report_tables(tmp_path):
    rep = run_experiment(ExperimentConfig("example31_identity", SMALL["example31_identity"]))
    paths = write_report(rep, str(tmp_path))
    assert any(p.endswith("identity.csv") for p in paths)
    lines = (tmp_path / "identity.csv").read_text().splitlines()
    assert lines[0].split(",") == ["n_tr", "lhs", "rhs", "residual"]
    assert len(lines) == 1 + 5 * 7

import json

import numpy as np
import pytest

from cvstab.cli import load_dataset, main
from cvstab.errors import DataError


@pytest.fixture
def sup(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(20, 2))
    y = z @ [1.0, -1.0] + rng.normal(size=20)
    path = tmp_path / "d.csv"
    np.savetxt(path, np.column_stack([z, y]), delimiter=",", header="z1,z2,y", comments="")
    return str(path)


@pytest.fixture
def mat(tmp_path):
    path = tmp_path / "m.csv"
    np.savetxt(path, np.random.default_rng(1).normal(size=(30, 3)), delimiter=",")
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cv_report(capsys, sup):
    code, out, _ = _run(capsys, "cv", "--data", sup, "--k", "5", "--learners", "ridge:1.0,zero", "--loss", "squared",
                        "--seed", "7")
    doc = json.loads(out)
    assert code == 0
    assert {"r_hat", "sigma_hat", "gamma_hat"} <= set(doc["results"])
    assert doc["seed"] == 7 and doc["command"][0] == "cv" and "version" in doc


def test_missing_data_is_usage_error(capsys):
    code, _, err = _run(capsys, "cv", "--k", "5", "--learners", "zero")
    assert code == 1 and "usage" in err and "error:" in err


def test_indivisible_k_is_data_error(capsys, sup):
    code, _, err = _run(capsys, "cv", "--data", sup, "--k", "3", "--learners", "zero")
    assert code == 2 and err.startswith("error:") and "divide" in err


def test_truncate_flag(capsys, sup):
    code, out, _ = _run(capsys, "cv", "--data", sup, "--k", "3", "--learners", "zero", "--truncate")
    assert code == 0 and json.loads(out)["results"]["n"] == 18


def test_unknown_learner_and_no_command(capsys, sup):
    assert _run(capsys, "cv", "--data", sup, "--learners", "bogus")[0] == 2
    assert _run(capsys)[0] == 1
    assert _run(capsys, "frobnicate")[0] == 1


def test_global_flags_either_side(capsys, sup, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(capsys, "--out", str(a), "cv", "--data", sup, "--learners", "zero")[0] == 0
    assert _run(capsys, "cv", "--data", sup, "--learners", "zero", "--out", str(b), "--threads", "2")[0] == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "timing.json").exists()


def test_mcs_and_cvc(capsys, sup):
    code, out, _ = _run(capsys, "mcs", "--data", sup, "--learners", "ridge:1.0,zero,mean", "--beta", "0.1",
                        "--complexity", "2,0,1", "--draws", "20000")
    assert code == 0
    assert "cvc_selected" in json.dumps(json.loads(out)["results"])


def test_maxmean_argmin_conformal_rollval_stability(capsys, sup, mat):
    assert _run(capsys, "maxmean", "--data", mat, "--lambda", "1.0")[0] == 0
    assert _run(capsys, "argmin", "--data", mat, "--bootstrap", "200")[0] == 0
    code, out, _ = _run(capsys, "conformal", "--data", sup, "--k", "4", "--z", "0.1,0.2", "--grid=-5:5:101")
    assert code == 0 and "intervals" in out
    code, out, _ = _run(capsys, "rollval", "--data", sup, "--learners", "zero,sgd:lam=1", "--every", "5")
    assert code == 0 and "xi_sums" in out
    code, out, _ = _run(capsys, "stability", "--learner", "mean", "--n-grid", "20,40", "--replicates", "20",
                        "--format", "csv")
    assert code == 0 and out.splitlines()[0].startswith("n,target")


def test_experiment_list_and_run(capsys, tmp_path):
    code, out, _ = _run(capsys, "experiment", "--list")
    assert code == 0 and "efron_stein" in out
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"B": 300}}))
    code, out, _ = _run(capsys, "experiment", "efron_stein", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0 and ("PASS" in out or "FAIL" in out)
    assert _run(capsys, "experiment", "missing_name")[0] == 2


def test_load_dataset_cases(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,y\n1,2\n3,4\n")
    d = load_dataset(str(p))
    assert d.y.tolist() == [2.0, 4.0] and d.z.tolist() == [[1.0], [3.0]]
    p.write_text("1,2\n3,4\n")
    assert load_dataset(str(p), "matrix").tolist() == [[1.0, 2.0], [3.0, 4.0]]
    for bad in ("a,y\n1,2\n3\n", "a,y\n1,x\n", "a,y\n1,nan\n", ""):
        p.write_text(bad)
        with pytest.raises(DataError):
            load_dataset(str(p))
    p.write_text("a,b\n1,2\n")
    d = load_dataset(str(p))
    assert d.y is None and d.z.tolist() == [[1.0, 2.0]]


def test_load_dataset_reports_row(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,y\n1,2\n3,oops\n")
    with pytest.raises(DataError, match="3"):
        load_dataset(str(p))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvstab.data import Dataset, Sample, leave_out, make_fold_plan, perturb_one, truncate_to_multiple
from cvstab.errors import DataError


def _toy(n=6, p=2):
    z = np.arange(n * p, dtype=float).reshape(n, p)
    return Dataset(z, np.arange(n, dtype=float) * 10)


def test_contiguous_folds():
    plan = make_fold_plan(6, 3)
    assert [f.tolist() for f in plan.folds] == [[0, 1], [2, 3], [4, 5]]
    assert plan.n_te == 2 and plan.n_tr == 4


def test_loo_plan_has_singletons():
    plan = make_fold_plan(4, 4)
    assert [f.tolist() for f in plan.folds] == [[0], [1], [2], [3]]


def test_non_divisible_is_rejected():
    with pytest.raises(DataError, match="does not divide"):
        make_fold_plan(7, 3)


@pytest.mark.parametrize("K", [0, 8])
def test_fold_count_range(K):
    with pytest.raises(DataError):
        make_fold_plan(7, K)


@given(st.integers(1, 40), st.integers(1, 40), st.one_of(st.none(), st.integers(0, 2**32)))
def test_partition_property(n_te, K, seed):
    n = n_te * K
    plan = make_fold_plan(n, K, seed)
    allidx = np.concatenate(plan.folds)
    assert sorted(allidx.tolist()) == list(range(n))
    for k, f in enumerate(plan.folds):
        assert np.all(plan.fold_of[f] == k)
        assert len(f) == n_te


def test_shuffled_plan_reproducible():
    a, b = make_fold_plan(30, 5, 11), make_fold_plan(30, 5, 11)
    assert np.array_equal(a.fold_of, b.fold_of)
    assert not np.array_equal(a.fold_of, make_fold_plan(30, 5).fold_of)


def test_perturb_one_replaces_single_sample():
    d = _toy(3, 1)
    out = perturb_one(d, 1, Sample(np.array([-1.0]), -5.0))
    assert out.z[:, 0].tolist() == [0.0, -1.0, 2.0]
    assert out.y.tolist() == [0.0, -5.0, 20.0]
    assert d.z[1, 0] == 1.0  # input untouched


def test_perturb_with_itself_is_identity():
    d = _toy()
    assert perturb_one(d, 2, d.sample(2)).equals(d)


@given(st.integers(0, 5), st.integers(0, 5))
def test_disjoint_perturbations_commute(i, j):
    d = _toy()
    xi, xj = Sample(np.array([100.0, 101.0]), 7.0), Sample(np.array([200.0, 201.0]), 8.0)
    if i == j:
        return
    a = perturb_one(perturb_one(d, i, xi), j, xj)
    b = perturb_one(perturb_one(d, j, xj), i, xi)
    assert a.equals(b)


@given(st.integers(0, 5))
def test_perturb_involution(i):
    d = _toy()
    x = Sample(np.array([9.0, 9.0]), 9.0)
    assert perturb_one(perturb_one(d, i, x), i, d.sample(i)).equals(d)


def test_perturb_validates():
    d = _toy()
    with pytest.raises(DataError):
        perturb_one(d, 6, d.sample(0))
    with pytest.raises(DataError):
        perturb_one(d, 0, Sample(np.zeros(3), 1.0))
    with pytest.raises(DataError):
        perturb_one(d, 0, Sample(np.zeros(2), None))


def test_leave_out_fold():
    d = _toy()
    plan = make_fold_plan(6, 3)
    out = leave_out(d, 1, plan)
    assert out.y.tolist() == [0.0, 10.0, 40.0, 50.0]


def test_leave_out_loo():
    d = _toy()
    out = leave_out(d, 3, make_fold_plan(6, 6))
    assert out.n == 5 and 30.0 not in out.y


def test_leave_out_rejects_single_fold():
    with pytest.raises(DataError, match="no training"):
        leave_out(_toy(), 0, make_fold_plan(6, 1))


def test_truncate():
    d, dropped = truncate_to_multiple(_toy(7, 1), 3)
    assert dropped == 1 and d.n == 6


def test_dataset_is_immutable():
    d = _toy()
    with pytest.raises(ValueError):
        d.z[0, 0] = 1.0


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]))
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)), np.zeros(2))

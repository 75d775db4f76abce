import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvstab.data import Dataset, Sample
from cvstab.errors import DataError, FitError
from cvstab.learners import (
    LearnerSpec, Model, fit, logistic_constants, loss, losses, objective_grad, objective_value, online_init,
    online_update, parse_learner, ridge_constants, sgd_bound, sgd_condition, sgd_rate, sgd_run, sgd_step,
    sieve_run, sieve_step, sieve_width,
)


def test_constant_zero():
    d = Dataset(np.random.default_rng(0).normal(size=(5, 3)), np.ones(5))
    m = fit(LearnerSpec("zero"), d)
    assert np.array_equal(m.coef, np.zeros(3)) and m.intercept == 0.0


def test_empirical_mean_stores_intercept():
    d = Dataset(np.zeros((4, 1)), [1.0, 2.0, 3.0, 6.0])
    m = fit(LearnerSpec("mean"), d)
    assert m.intercept == 3.0 and m.params.tolist() == [3.0]
    assert m.predict(np.zeros((2, 1))).tolist() == [3.0, 3.0]


def test_truncated_series_mean_of_yz():
    d = Dataset(np.array([[1.0, 5.0], [1.0, -5.0]]), [2.0, 4.0])
    m = fit(LearnerSpec("series", J=1), d)
    assert m.coef.tolist() == [3.0, 0.0]


@given(st.integers(0, 4))
def test_truncated_series_zero_beyond_J(J):
    rng = np.random.default_rng(J)
    d = Dataset(rng.normal(size=(20, 4)), rng.normal(size=20))
    m = fit(LearnerSpec("series", J=J), d)
    assert np.all(m.coef[J:] == 0.0)


def test_ridge_matches_hand_inverse():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0], [-1.0, 0.5], [0.5, 2.0]])
    y = np.array([1.0, -1.0, 0.5, 2.0, -0.5, 1.5])
    n, lam = 6, 1.0
    A = z.T @ z / n + lam * np.eye(2)
    b = z.T @ y / n
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    inv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
    m = fit(LearnerSpec("ridge", lam=lam), Dataset(z, y))
    np.testing.assert_allclose(m.coef, inv @ b, rtol=1e-12, atol=1e-14)


def test_ridge_support_restricts_coordinates():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(50, 3))
    y = z @ [1.0, 2.0, 3.0]
    m = fit(LearnerSpec("ridge", lam=0.0, support=(0, 2)), Dataset(z, y))
    assert m.coef[1] == 0.0
    sub = fit(LearnerSpec("ridge", lam=0.0), Dataset(z[:, [0, 2]], y))
    np.testing.assert_allclose(m.coef[[0, 2]], sub.coef, rtol=1e-12)


def test_ridge_rank_deficient_raises():
    z = np.ones((5, 2))
    with pytest.raises(FitError):
        fit(LearnerSpec("ridge", lam=0.0), Dataset(z, np.arange(5.0)))


def test_closed_form_permutation_symmetry():
    rng = np.random.default_rng(2)
    z, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    perm = rng.permutation(40)
    for spec in (LearnerSpec("ridge", lam=0.3), LearnerSpec("series", J=2), LearnerSpec("mean")):
        a = fit(spec, Dataset(z, y))
        b = fit(spec, Dataset(z[perm], y[perm]))
        np.testing.assert_allclose(a.coef, b.coef, rtol=1e-12, atol=1e-15)
        assert a.intercept == pytest.approx(b.intercept, rel=1e-12)


def test_sgd_fit_deterministic_given_seed():
    rng = np.random.default_rng(3)
    d = Dataset(rng.uniform(-0.5, 0.5, size=(30, 2)), rng.uniform(-0.5, 0.5, size=30))
    spec = LearnerSpec("sgd", lam=1.0)
    assert np.array_equal(fit(spec, d, 5).coef, fit(spec, d, 5).coef)
    assert not np.array_equal(fit(spec, d, 5).coef, fit(spec, d, 6).coef)


def test_sgd_single_step_algebra():
    spec = LearnerSpec("sgd", lam=0.0)
    assert sgd_rate(spec, 1) == 1.0
    m = sgd_step(Model(np.zeros(2), 0.0, spec), Sample(np.array([1.0, 0.0]), 1.0), 1, spec)
    assert m.coef.tolist() == [1.0, 0.0]


def test_sgd_fixed_point():
    spec = LearnerSpec("sgd", lam=0.0)
    f = Model(np.array([2.0, 0.0]), 0.0, spec)
    m = sgd_step(f, Sample(np.array([1.0, 0.0]), 2.0), 3, spec)
    assert m.coef.tolist() == [2.0, 0.0]


@pytest.mark.parametrize("objective", ["ridge", "logistic"])
def test_sgd_run_matches_reference_loop(objective):
    rng = np.random.default_rng(4)
    z = rng.uniform(-1, 1, size=(10, 3)) / math.sqrt(3)
    y = (rng.uniform(size=10) < 0.5).astype(float) if objective == "logistic" else rng.normal(size=10)
    spec = LearnerSpec("sgd", objective=objective, lam=0.5, a=0.6)
    g, b, c0, c2 = spec.constants()
    f = np.zeros(3)
    for t in range(1, 11):
        s = z[t - 1] @ f
        if objective == "ridge":
            grad = -(y[t - 1] - s) * z[t - 1] + 0.5 * f
        else:
            grad = (1 / (1 + math.exp(-s)) - y[t - 1]) * z[t - 1] + 2 * 0.5 * f
        f = f - t ** (-0.6) / b * grad
    np.testing.assert_allclose(sgd_run(spec, z, y), f, rtol=1e-12, atol=1e-15)


def test_sieve_first_step():
    spec = LearnerSpec("sieve", tau=0.0, w=0.0, a=0.0, c=1.0)
    m = sieve_step(Model(np.zeros(3), 0.0, spec), Sample(np.array([2.0, 5.0, 7.0]), 3.0), 1, spec)
    assert m.coef.tolist() == [6.0, 0.0, 0.0]


def test_sieve_zero_residual_is_fixed_point():
    spec = LearnerSpec("sieve", tau=0.5, w=0.3, a=0.2, c=1.0)
    f = Model(np.array([1.0, 2.0, 0.0]), 0.0, spec)
    m = sieve_step(f, Sample(np.array([1.0, 1.0, 1.0]), 3.0), 4, spec)
    assert m.coef.tolist() == [1.0, 2.0, 0.0]


def test_sieve_run_matches_reference_loop():
    rng = np.random.default_rng(5)
    p, n = 12, 100
    z, y = rng.uniform(-1, 1, size=(n, p)), rng.normal(size=n)
    spec = LearnerSpec("sieve", tau=0.5, w=0.6, a=0.4, c=0.3)
    f = np.zeros(p)
    for i in range(1, n + 1):
        J = math.ceil(i ** 0.5 - 1e-12)
        r = y[i - 1] - z[i - 1] @ f
        for j in range(J):
            f[j] += 0.3 * i ** (-0.4) * r * (j + 1) ** (-1.2) * z[i - 1, j]
    np.testing.assert_allclose(sieve_run(spec, z, y), f, rtol=1e-12, atol=1e-12)


def test_sieve_width_exact_powers():
    assert [sieve_width(i, 0.5) for i in (1, 4, 5, 9, 10)] == [1, 2, 3, 3, 4]
    assert sieve_width(1000, 1 / 3) == 10


def test_sieve_width_overflow_raises():
    spec = LearnerSpec("sieve", tau=1.0)
    with pytest.raises(DataError, match="basis"):
        sieve_run(spec, np.ones((5, 3)), np.ones(5))


def test_batched_sgd_equals_individual_runs():
    rng = np.random.default_rng(6)
    z, y = rng.uniform(-1, 1, size=(4, 20, 2)) / 2, rng.normal(size=(4, 20))
    spec = LearnerSpec("sgd", lam=1.0)
    batch = sgd_run(spec, z, y)
    for b in range(4):
        np.testing.assert_array_equal(batch[b], sgd_run(spec, z[b], y[b]))


def test_losses():
    zero = Model(np.zeros(1))
    assert loss(zero, Sample(np.array([0.3]), 3.0)) == 9.0
    m = Model(np.array([2.0]))
    assert loss(m, Sample(np.array([1.5]), 3.0)) == 0.0
    for yv in (0.0, 1.0):
        assert loss(zero, Sample(np.array([1.0]), yv), "logistic") == pytest.approx(math.log(2), abs=1e-15)
    assert loss(zero, Sample(np.array([1.0]), -2.0), "abs_residual") == 2.0
    with pytest.raises(DataError):
        losses(zero, np.zeros((1, 1)), [1.0], "hinge")


@pytest.mark.parametrize("objective", ["ridge", "logistic"])
def test_gradient_matches_finite_differences(objective):
    rng = np.random.default_rng(7)
    spec = LearnerSpec("sgd", objective=objective, lam=0.7)
    h = 1e-6
    for _ in range(50):
        f, z = rng.normal(size=3), rng.normal(size=3)
        y = float(rng.uniform() < 0.5) if objective == "logistic" else rng.normal()
        g = objective_grad(spec, f, z, y)
        fd = np.array([(objective_value(spec, f + h * e, z, y) - objective_value(spec, f - h * e, z, y)) / (2 * h)
                       for e in np.eye(3)])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_ridge_sgd_map_is_contractive():
    rng = np.random.default_rng(8)
    lam = 0.5
    spec = LearnerSpec("sgd", lam=lam, r_x=1.0)
    g, b, _, _ = spec.constants()
    for _ in range(100):
        alpha = rng.uniform(0, 2 / (b + g))
        z = rng.normal(size=3)
        z *= rng.uniform() / np.linalg.norm(z)
        y = rng.normal()
        u, v = rng.normal(size=3), rng.normal(size=3)
        Gu = u - alpha * objective_grad(spec, u, z, y)
        Gv = v - alpha * objective_grad(spec, v, z, y)
        rate = 1 - b * g * alpha / (b + g)
        assert np.linalg.norm(Gu - Gv) <= rate * np.linalg.norm(u - v) * (1 + 1e-12)


def test_constants_formulas():
    assert ridge_constants(1.0, 1.0, 2.0) == {"gamma": 2.0, "C0": 4.0, "beta": 3.0, "C2": 0.0}
    c = logistic_constants(2.0, 0.5, 0.1)
    assert c["gamma"] == pytest.approx(0.2)
    assert c["beta"] == pytest.approx(4.1)
    assert c["C0"] == pytest.approx(4 + math.log1p(math.e) / 0.5 + 0.05)
    assert c["C2"] == pytest.approx(2.0)


def test_sgd_bound_and_condition():
    spec = LearnerSpec("sgd", lam=2.0, a=0.5)
    assert sgd_bound(spec, 100) == pytest.approx(2 ** 1.5 * 4 / 3 / 10)
    lhs, rhs = sgd_condition(spec, 100)
    assert lhs == pytest.approx(0.4)
    assert rhs == pytest.approx(0.25 / (1 - 2 ** -0.5) * math.log(100) / 10)


def test_spec_validation():
    with pytest.raises(DataError):
        LearnerSpec("nope")
    with pytest.raises(DataError):
        LearnerSpec("sgd", a=1.0)
    with pytest.raises(DataError):
        LearnerSpec("sgd", lam=1.0, gamma=5.0)
    with pytest.raises(DataError):
        LearnerSpec("ridge", lam=-1.0)


@pytest.mark.parametrize("text,kind,attr,val", [
    ("ridge:1.0", "ridge_closed_form", "lam", 1.0),
    ("series:5", "truncated_series", "J", 5),
    ("sgd:logistic", "sgd", "objective", "logistic"),
    ("sieve:tau=0.5;w=0.6;a=0.4;c=0.15", "sieve_sgd_online", "c", 0.15),
    ("ridge:lam=0;support=0+2", "ridge_closed_form", "support", (0, 2)),
])
def test_parse_learner(text, kind, attr, val):
    spec = parse_learner(text)
    assert spec.kind == kind and getattr(spec, attr) == val


@pytest.mark.parametrize("text", ["", "foo", "zero:3", "ridge:lam=x", "ridge:bogus=1"])
def test_parse_learner_rejects(text):
    with pytest.raises(DataError):
        parse_learner(text)


@given(st.sampled_from(["ridge", "sgd", "sieve", "series", "zero", "mean"]),
       st.floats(0, 5, allow_nan=False), st.floats(0.05, 0.95), st.integers(0, 6))
def test_label_round_trip(kind, lam, a, J):
    spec = {"ridge": LearnerSpec("ridge", lam=round(lam, 3), support=(0, J) if J else None),
            "sgd": LearnerSpec("sgd", lam=round(lam, 3), a=round(a, 3)),
            "sieve": LearnerSpec("sieve", tau=round(a, 3), w=round(lam, 3), a=round(a, 3) % 0.99, c=1.5),
            "series": LearnerSpec("series", J=J), "zero": LearnerSpec("zero"), "mean": LearnerSpec("mean")}[kind]
    back = parse_learner(spec.label)
    assert back.label == spec.label and back.kind == spec.kind


def test_online_updates_match_loop():
    rng = np.random.default_rng(9)
    z, y = rng.uniform(-0.5, 0.5, size=(25, 2)), rng.normal(size=25)
    spec = LearnerSpec("sgd", lam=1.0, a=0.5)
    st_ = online_init(spec, 2)
    assert np.array_equal(st_.coef, np.zeros(2)) and st_.i == 0
    for i in range(25):
        st_ = online_update(st_, Sample(z[i], y[i]))
    np.testing.assert_array_equal(st_.coef, sgd_run(spec, z, y))
    # the state keeps no sample history
    assert set(vars(st_)) == {"spec", "coef", "i"}


def test_online_rejects_batch_learner():
    with pytest.raises(DataError):
        online_init(LearnerSpec("ridge"), 2)

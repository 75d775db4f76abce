import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cvstab.cv import RiskOracle
from cvstab.errors import DataError
from cvstab.learners import LearnerSpec, fit, losses
from cvstab.stability import (
    efron_stein_check, estimate, loglog_slope, loo_samples, lq_norm, nabla2_samples, nabla_samples,
    sgd_bound_check, sgd_positions, subweibull_fit,
)

GEN = RiskOracle((0.5, -0.5), sigma2=0.04 / 3, sz_diag=(0.16 / 3, 0.16 / 3), covariates="uniform", noise="uniform")


def test_lq_norm_examples():
    assert lq_norm([1, 1, 1], 3.0) == 1.0
    assert lq_norm([0, 2], 2.0) == pytest.approx(math.sqrt(2))
    assert lq_norm([0, 0], 4.0) == 0.0
    x = np.random.default_rng(0).standard_normal(100_000)
    assert abs(lq_norm(x, 2.0) - 1) <= 0.02


@given(arrays(float, st.integers(1, 50), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_lq_monotone_in_q(x):
    vals = [lq_norm(x, q) for q in (1.0, 2.0, 4.0, 8.0, 16.0)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_lq_validation():
    with pytest.raises(DataError):
        lq_norm([], 2.0)
    with pytest.raises(DataError):
        lq_norm([1.0], 0.5)


def test_subweibull_bounded_and_gaussian():
    rng = np.random.default_rng(1)
    assert subweibull_fit(rng.choice([-1.0, 1.0], 100_000))[1] <= 0.1
    assert 0.3 <= subweibull_fit(rng.standard_normal(100_000))[1] <= 0.7
    assert subweibull_fit(np.zeros(10)) == (0.0, 0.0)


def _population_alpha(moment, q_grid=(1.0, 2.0, 4.0, 8.0)):
    q = np.array(q_grid)
    norms = np.array([moment(v) ** (1 / v) for v in q])
    return float(np.polyfit(np.log(q), np.log(norms), 1)[0])


def test_subweibull_exponential_matches_population_fit():
    # E X^q = Gamma(q+1) for standard exponential draws
    x = np.random.default_rng(2).exponential(size=200_000)
    pop = _population_alpha(lambda q: math.gamma(q + 1))
    assert abs(subweibull_fit(x)[1] - pop) <= 0.05


@pytest.mark.xfail(strict=True, reason="on q in {1,2,4,8} the exponential moment curve has log-log slope "
                                       "about 0.64; the tail exponent 1 is only reached as q grows")
def test_subweibull_exponential_theoretical_band():
    x = np.random.default_rng(2).exponential(size=200_000)
    assert 0.8 <= subweibull_fit(x)[1] <= 1.2


def test_loglog_slope_exact():
    n = np.array([10.0, 100.0, 1000.0])
    assert loglog_slope(n, 3 * n ** -0.5) == pytest.approx(-0.5)


def test_estimate_fields():
    est = estimate([1.0, -1.0, 2.0], 10, "loss")
    assert est.B == 3 and est.lq[0] == pytest.approx(4 / 3)
    assert est.as_dict()["target"] == "loss"
    with pytest.raises(DataError):
        estimate([1.0], 10, "loss")


def test_zero_learner_has_zero_differences():
    est = nabla_samples(LearnerSpec("zero"), GEN, 20, "loss", B=30)
    assert np.all(est.samples == 0)


def test_mean_learner_parameter_difference_closed_form():
    gen = RiskOracle((0.0,), sigma2=1.0)
    n, B, seed = 25, 40, 3
    est = nabla_samples(LearnerSpec("mean"), gen, n, "parameter", B=B, seed=seed, index=4)
    from cvstab.stability import draw_replicates
    _, y, _, _, _, yr = draw_replicates(gen, n, B, 1, seed)
    np.testing.assert_allclose(est.samples, np.abs(yr[:, 0] - y[:, 4]) / n, rtol=1e-12, atol=1e-15)


def test_second_difference_of_additive_learner_is_zero():
    gen = RiskOracle((1.0, 2.0))
    for spec in (LearnerSpec("mean"), LearnerSpec("series", J=2)):
        est = nabla2_samples(spec, gen, 30, B=20, pairs=((0, 1), (5, 9)))
        assert np.max(est.samples) <= 1e-14


def test_second_difference_with_identical_replacement_is_zero():
    est = nabla2_samples(LearnerSpec("sgd", lam=2.0, shuffle=False), GEN, 50, B=20, replace_same=True)
    assert np.all(est.samples == 0)


def test_sgd_positions():
    assert sgd_positions(10) == (0, 4, 9)
    assert sgd_positions(1) == (0,)


def test_sgd_bound_check_zero_learner():
    out = sgd_bound_check(LearnerSpec("zero"), GEN, [20, 40], B=5)
    assert all(r["max_norm"] == 0 for r in out["rows"])
    assert out["slope"] is None


def test_sgd_bound_at_400():
    spec = LearnerSpec("sgd", lam=2.0, a=0.5, r_x=1.0, r_f=1.0)
    out = sgd_bound_check(spec, GEN, [400], B=50)
    row = out["rows"][0]
    assert row["all_below"] and row["last_below"]
    assert row["max_norm"] <= row["bound"]


@pytest.mark.slow
def test_ridge_sgd_first_order_slope():
    spec = LearnerSpec("sgd", lam=2.0, a=0.5, r_x=1.0, r_f=1.0, shuffle=False)
    ns = [100, 200, 400, 800, 1600, 3200]
    l2 = [nabla_samples(spec, GEN, n, "parameter", B=100, seed=n, index=n - 1).lq[1] for n in ns]
    assert abs(loglog_slope(ns, l2) + 0.5) <= 0.15


@pytest.mark.slow
def test_logistic_sgd_second_order_slope():
    gen = RiskOracle((0.5, -0.5), sigma2=0.04 / 3, sz_diag=(0.16 / 3, 0.16 / 3), covariates="uniform",
                     noise="uniform", intercept=0.5)
    spec = LearnerSpec("sgd", objective="logistic", lam=0.5, a=0.5, r_x=1.0, r_f=1.0, shuffle=False)
    ns = [100, 200, 400, 800, 1600]
    l2 = [nabla2_samples(spec, gen, n, B=200, seed=n, pairs=((n - 2, n - 1),)).lq[1] for n in ns]
    assert loglog_slope(ns, l2) <= -2 * 0.5 + 0.2


def _l2_with_se(s):
    sq = np.asarray(s) ** 2
    m = sq.mean()
    return math.sqrt(m), sq.std(ddof=1) / math.sqrt(sq.size) / (2 * math.sqrt(m))


def test_perturb_one_at_most_twice_leave_one_out():
    gen = RiskOracle((1.0, -1.0, 0.5))
    spec = LearnerSpec("ridge", lam=0.5)
    po = nabla_samples(spec, gen, 60, "parameter", B=300, seed=4)
    lo = loo_samples(spec, gen, 60, "parameter", B=300, seed=5)
    s_po, se_po = _l2_with_se(po.samples)
    s_lo, se_lo = _l2_with_se(lo.samples)
    assert s_po <= 2 * s_lo + 3 * math.hypot(se_po, 2 * se_lo)


def test_difference_loss_stability_shrinks():
    p = 20
    gen = RiskOracle(tuple(1.0 / j for j in range(1, p + 1)))
    pair = (LearnerSpec("series", J=1), LearnerSpec("series", J=3))
    out = []
    for n in (200, 800, 3200):
        est = nabla_samples(pair, gen, n, "loss_diff", B=300, seed=n)
        d = gen.draw(np.random.default_rng(n), n)
        z, y = gen.draw_arrays(np.random.default_rng(n + 1), 20_000)
        diff = losses(fit(pair[0], d), z, y) - losses(fit(pair[1], d), z, y)
        out.append(math.sqrt(n) * est.lq[1] / diff.std())
    assert out[0] > out[1] > out[2]


def test_efron_stein_examples():
    mean = efron_stein_check("mean", 100, 10_000, seed=0)
    assert abs(mean["ratio"] - 1) <= 0.05
    assert mean["bound"] == pytest.approx(1 / 100, rel=0.05)
    const = efron_stein_check("constant", 10, 100)
    assert const["mc_variance"] == 0 and const["bound"] == 0 and const["ratio"] == 1.0
    assert efron_stein_check("max", 20, 4000, seed=1)["ratio"] < 1
    with pytest.raises(DataError):
        efron_stein_check("median", 10, 100)


def test_loss_diff_needs_pair():
    with pytest.raises(DataError):
        nabla_samples((LearnerSpec("zero"),), GEN, 10, "loss_diff", B=5)

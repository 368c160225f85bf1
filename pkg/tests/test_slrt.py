import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from universal_infer.models import ContractError, Dataset, LinearHypothesis, ModelKind, ModelSpec
from universal_infer.slrt import (
    SplitSpec,
    TestConfig,
    cross_fit_statistic,
    decide,
    fold_sizes,
    generic_log_t,
    gaussian_log_t,
    run_test,
    slrt_statistic,
    split,
    split_by_assignment,
    swapped_statistic,
)

GAUSS1 = ModelSpec(ModelKind.GAUSSIAN_LOCATION, 1)
POINT0 = LinearHypothesis.point([0.0])


def worked_split():
    # rows 0,1 -> D0 = {0, 2}; rows 2,3 -> D1 = {1, 3}
    return split_by_assignment([[0.0], [2.0], [1.0], [3.0]], [2, 3])


@pytest.mark.parametrize("n,gamma,n0,n1", [
    (10, 0.5, 5, 5),
    (100, 2 / 3, 33, 67),
    (2, 0.01, 1, 1),
    (2, 0.99, 1, 1),
    (5, 0.5, 2, 3),  # 2.5 rounds away from zero
])
def test_fold_sizes(n, gamma, n0, n1):
    assert fold_sizes(n, gamma) == (n0, n1)


def test_fold_size_formula_two_thirds():
    assert round(100 * 2 / 3, 2) == 66.67
    sd = split(np.arange(100.0), SplitSpec(2 / 3, 3))
    assert (sd.n0, sd.n1) == (33, 67)


def test_split_needs_two_rows():
    with pytest.raises(ContractError):
        split([[1.0]], SplitSpec(0.5))


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1, 1.5])
def test_split_spec_rejects_bad_gamma(gamma):
    with pytest.raises(ContractError):
        SplitSpec(gamma)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 2**64 - 1))
def test_split_is_deterministic_partition(n, gamma, seed):
    rows = np.random.default_rng(n).integers(0, 5, size=(n, 2)).astype(float)
    a = split(rows, SplitSpec(gamma, seed))
    b = split(rows, SplitSpec(gamma, seed))
    np.testing.assert_array_equal(a.permutation, b.permutation)
    assert a.estimation == b.estimation and a.evaluation == b.evaluation
    assert sorted(a.permutation.tolist()) == list(range(n))
    both = np.vstack([a.estimation.rows, a.evaluation.rows])
    assert Counter(map(tuple, both)) == Counter(map(tuple, rows))
    assert a.n1 == fold_sizes(n, gamma)[1]


def test_split_shuffles_sorted_input():
    sd = split(np.arange(20.0), SplitSpec(0.5, 1))
    assert sorted(sd.evaluation.rows[:, 0].tolist()) != list(range(10))


def direct_log_t(d0, d1, theta0):
    theta1 = np.mean(d0)
    return sum(norm.logpdf(x - theta1) for x in d1) - sum(norm.logpdf(x - theta0) for x in d1)


def test_worked_example_statistic():
    sd = worked_split()
    expected = direct_log_t([0.0, 2.0], [1.0, 3.0], 0.0)
    assert expected == pytest.approx(3.0, abs=1e-12)
    assert slrt_statistic(sd, POINT0, GAUSS1) == 3.0
    assert slrt_statistic(sd, POINT0, GAUSS1, method="generic") == pytest.approx(3.0, abs=1e-12)


def test_worked_example_swapped():
    sd = worked_split()
    expected = direct_log_t([1.0, 3.0], [0.0, 2.0], 0.0)
    assert expected == pytest.approx(0.0, abs=1e-12)
    assert swapped_statistic(sd, POINT0, GAUSS1) == pytest.approx(0.0, abs=1e-12)


def test_statistic_zero_when_estimates_coincide():
    # D0 mean equals the projection of the D1 mean
    h = LinearHypothesis.coordinate(2, [0])
    sd = split_by_assignment([[1.0, 0.0], [3.0, 0.0], [0.0, 1.0], [4.0, -1.0]], [2, 3])
    assert slrt_statistic(sd, h) == pytest.approx(0.0, abs=1e-14)


def test_statistic_nonnegative_when_numerator_at_evaluation_mean():
    h = LinearHypothesis.coordinate(2, [0])
    sd = split_by_assignment([[1.0, 2.0], [3.0, 4.0], [1.0, 2.0], [3.0, 4.0]], [2, 3])
    b = 3.0
    assert slrt_statistic(sd, h) == pytest.approx(0.5 * 2 * b * b)
    assert slrt_statistic(sd, h) >= 0


def test_symmetric_folds_swap_invariant():
    h = LinearHypothesis.coordinate(2, [1])
    sd = split_by_assignment([[1.0, 2.0], [0.5, -1.0], [0.5, -1.0], [1.0, 2.0]], [2, 3])
    assert swapped_statistic(sd, h) == slrt_statistic(sd, h)


def test_statistic_errors():
    sd = worked_split()
    with pytest.raises(ContractError):
        slrt_statistic(sd, LinearHypothesis.point([0.0, 0.0]))
    with pytest.raises(ContractError):
        slrt_statistic(sd, POINT0, ModelSpec(ModelKind.GAUSSIAN_LOCATION, 2))
    with pytest.raises(ContractError):
        slrt_statistic(sd, POINT0, ModelSpec(ModelKind.GAUSSIAN_MIXTURE2, 1))


@settings(max_examples=80, deadline=None)
@given(st.sampled_from([1, 2, 5, 50]), st.integers(2, 200), st.floats(0.05, 0.95), st.data())
def test_closed_form_matches_generic(d, n, gamma, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    q = data.draw(st.integers(0, d - 1))
    basis = np.linalg.qr(rng.standard_normal((d, d)))[0][:, :q].T if q else None
    h = LinearHypothesis(rng.standard_normal(d), basis)
    x = rng.standard_normal((n, d)) + rng.standard_normal(d)
    sd = split(x, SplitSpec(gamma, data.draw(st.integers(0, 2**64 - 1))))
    a, b = gaussian_log_t(sd, h), generic_log_t(sd, h)
    assert math.isfinite(a) and math.isfinite(b)
    assert abs(a - b) < 1e-8
    assert math.isfinite(swapped_statistic(sd, h))


def test_cross_fit_examples():
    assert cross_fit_statistic(0.0, 0.0) == 0.0
    with mpmath.workdps(50):
        expected = float(mpmath.log((mpmath.e ** 3 + 1) / 2))
    assert expected == pytest.approx(2.35544, abs=1e-5)
    assert cross_fit_statistic(3.0, 0.0) == pytest.approx(expected, rel=1e-15)
    assert cross_fit_statistic(0.0, 3.0) == cross_fit_statistic(3.0, 0.0)
    assert cross_fit_statistic(-700.0, -700.0) == -700.0
    assert cross_fit_statistic(800.0, 0.0) == pytest.approx(800.0 - math.log(2))


@given(st.floats(-1e6, 1e6))
def test_cross_fit_of_equal_inputs_is_exact(x):
    assert cross_fit_statistic(x, x) == x


def test_cross_fit_rejects_non_finite():
    with pytest.raises(ContractError):
        cross_fit_statistic(float("inf"), 0.0)


def test_decide_examples():
    cfg = TestConfig(alpha=0.05)
    assert math.log(20) == pytest.approx(2.9957, abs=1e-4)
    assert not decide(0.0, cfg).reject
    assert decide(3.0, cfg).reject
    assert decide(math.log(1 / 0.05), cfg).reject  # closed rejection region
    assert not decide(math.nextafter(math.log(20), 0), cfg).reject


def test_decide_override_marks_guarantee_void():
    res = decide(2.0, TestConfig(0.05, critical_value_override=5.0))
    assert res.reject and res.guarantee_void
    assert res.log_crit == math.log(5.0)
    assert "guarantee=void" in res.format_line()
    assert "guarantee" not in decide(2.0, TestConfig(0.05)).format_line()


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=1.0),
                                    dict(alpha=0.05, critical_value_override=0.0),
                                    dict(alpha=0.05, critical_value_override=-1.0)])
def test_test_config_validation(kwargs):
    with pytest.raises(ContractError):
        TestConfig(**kwargs)


@given(st.floats(-50, 50), st.floats(0.01, 1e6), st.floats(0.01, 1e6))
def test_rejection_monotone_in_critical_value(log_t, c1, c2):
    lo, hi = sorted([c1, c2])
    r_lo = decide(log_t, TestConfig(0.5, lo)).reject
    r_hi = decide(log_t, TestConfig(0.5, hi)).reject
    assert r_lo >= r_hi


def test_run_test_worked_example():
    res = run_test([[0.0], [2.0], [1.0], [3.0]], POINT0, None, TestConfig(0.05), assignment=[2, 3])
    assert res.log_t == pytest.approx(3.0, abs=1e-12)
    assert res.reject and (res.n0, res.n1) == (2, 2)
    assert res.gamma_effective == 0.5
    cf = run_test([[0.0], [2.0], [1.0], [3.0]], POINT0, None, TestConfig(0.05),
                  assignment=[2, 3], cross_fit=True)
    assert cf.log_t == pytest.approx(cross_fit_statistic(3.0, 0.0))


def test_split_by_assignment_errors():
    with pytest.raises(ContractError):
        split_by_assignment([[0.0], [1.0]], [0, 1])
    with pytest.raises(ContractError):
        split_by_assignment([[0.0], [1.0]], [2])
    with pytest.raises(ContractError):
        split_by_assignment([[0.0], [1.0], [2.0]], [0, 0])


def test_markov_mean_of_t_under_null():
    # simple null in d=1: E[T] = 1 exactly
    rng = np.random.default_rng(5)
    ts = []
    for _ in range(4000):
        x = Dataset(rng.standard_normal((40, 1)))
        sd = split(x, SplitSpec(0.5, int(rng.integers(2**63))))
        ts.append(math.exp(slrt_statistic(sd, POINT0)))
    ts = np.array(ts)
    assert ts.mean() <= 1 + 3 * ts.std(ddof=1) / math.sqrt(len(ts))

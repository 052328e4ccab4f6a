import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmem.numerics import (
    DegenerateVarianceError,
    MomentAccumulator,
    double_factorial,
    gaussian_tail,
    gaussian_tail_inv,
    kahan_sum,
    moments,
    pseudoinverse_psd,
)


def test_pinv_identity():
    assert np.allclose(pseudoinverse_psd(np.eye(4)), np.eye(4))


def test_pinv_rank_deficient_diagonal():
    out = pseudoinverse_psd(np.diag([2.0, 0.0]))
    assert np.allclose(out, np.diag([0.5, 0.0]))


def test_pinv_moore_penrose_residual():
    rng = np.random.default_rng(0)
    x = rng.choice([-1.0, 1.0], size=(50, 100))
    o = x @ x.T / 100.0
    o_pinv = pseudoinverse_psd(o)
    residual = np.linalg.norm(o @ o_pinv @ o - o) / np.linalg.norm(o)
    assert residual < 1e-8
    # full-rank case: the pseudoinverse inverts back
    assert np.linalg.norm(pseudoinverse_psd(o_pinv) - o) / np.linalg.norm(o) < 1e-8


def test_pinv_rejects_bad_inputs():
    with pytest.raises(ValueError):
        pseudoinverse_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        pseudoinverse_psd(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        pseudoinverse_psd(np.ones((2, 3)))


def test_pinv_zero_matrix():
    assert np.array_equal(pseudoinverse_psd(np.zeros((3, 3))), np.zeros((3, 3)))


def test_moments_rademacher():
    rng = np.random.default_rng(1)
    x = rng.choice([-1.0, 1.0], size=1_000_000)
    mean, var, kurt = moments(x)
    assert abs(mean) < 0.01
    assert abs(var - 1.0) < 0.01
    assert abs(kurt - (-2.0)) < 0.01


def test_moments_constant_stream_signals():
    acc = MomentAccumulator()
    acc.push_many(np.full(100, 3.25))
    assert acc.variance == 0.0
    with pytest.raises(DegenerateVarianceError):
        acc.excess_kurtosis


def test_moments_standard_normal_kurtosis():
    rng = np.random.default_rng(2)
    _, _, kurt = moments(rng.standard_normal(1_000_000))
    assert -0.03 <= kurt <= 0.03


def test_moments_need_enough_samples():
    acc = MomentAccumulator()
    acc.push(1.0)
    with pytest.raises(ValueError):
        acc.variance
    acc.push(2.0)
    acc.push(3.0)
    with pytest.raises(ValueError):
        acc.excess_kurtosis


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=60),
       st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=60))
def test_accumulator_merge_matches_concatenation(xs, ys):
    both = MomentAccumulator()
    both.push_many(np.array(xs + ys))
    left = MomentAccumulator()
    left.push_many(np.array(xs))
    right = MomentAccumulator()
    right.push_many(np.array(ys))
    left.merge(right)
    assert left.count == both.count
    assert left.mean == pytest.approx(both.mean, rel=1e-10, abs=1e-10)
    assert left.m2 == pytest.approx(both.m2, rel=1e-10, abs=1e-8)
    assert left.m4 == pytest.approx(both.m4, rel=1e-10, abs=1e-6)


def test_scalar_push_matches_batch():
    xs = np.linspace(-2, 5, 101) ** 2
    one = MomentAccumulator()
    for x in xs:
        one.push(float(x))
    batch = MomentAccumulator()
    batch.push_many(xs)
    assert one.mean == pytest.approx(batch.mean, rel=1e-12)
    assert one.m4 == pytest.approx(batch.m4, rel=1e-9)


def test_gaussian_tail_at_zero():
    assert gaussian_tail(0.0) == 0.5


def test_gaussian_tail_standard_quantile():
    # H(1.6449) ~ 0.05, the 95% point of the standard normal
    assert abs(float(gaussian_tail(1.6449)) - 0.05) < 1e-4


def test_gaussian_tail_strictly_decreasing():
    # below about -6 the tail saturates to 1.0 at double precision
    xs = np.linspace(-5.0, 5.0, 1000)
    vals = gaussian_tail(xs)
    assert np.all(np.diff(vals) < 0)


def test_gaussian_tail_asymptotic_form():
    # H(sqrt(z)) ~ exp(-z/2)/sqrt(2 pi z); the relative error is ~1/z, so it
    # passes 2% from z = 50 up and sits near 2.4% at z = 40.
    for z in (50.0, 60.0, 80.0, 120.0, 200.0):
        exact = float(gaussian_tail(math.sqrt(z)))
        approx = math.exp(-z / 2.0) / math.sqrt(2.0 * math.pi * z)
        assert abs(approx / exact - 1.0) < 0.02
    exact40 = float(gaussian_tail(math.sqrt(40.0)))
    approx40 = math.exp(-20.0) / math.sqrt(80.0 * math.pi)
    assert abs(approx40 / exact40 - 1.0) < 0.025


def test_gaussian_tail_inverse_roundtrip():
    for p in (0.5, 0.1, 1e-3, 1e-6, 1e-10, 1e-12):
        x = gaussian_tail_inv(p)
        assert abs(float(gaussian_tail(x)) - p) <= 1e-12 * p


def test_gaussian_tail_inv_domain():
    with pytest.raises(ValueError):
        gaussian_tail_inv(0.0)
    with pytest.raises(ValueError):
        gaussian_tail_inv(0.6)


def test_double_factorials():
    assert double_factorial(-1) == 1
    assert double_factorial(1) == 1
    assert double_factorial(5) == 15
    assert double_factorial(7) == 105
    with pytest.raises(ValueError):
        double_factorial(4)
    with pytest.raises(ValueError):
        double_factorial(-3)


def test_kahan_sum_compensates():
    # swings that a running float64 total destroys entirely: 1e16 + 1 - 1e16
    terms = np.tile(np.array([1e16, 1.0, -1e16]), 1000)
    total = kahan_sum(terms.reshape(1, -1), axis=1)[0]
    assert total == 1000.0
    # alternating huge/tiny magnitudes stay within the compensated error bound
    mixed = np.tile(np.array([1.0, 1e-16, -1.0, 1e-16]), 250_000)
    got = kahan_sum(mixed.reshape(1, -1), axis=1)[0]
    assert got == pytest.approx(math.fsum(mixed.tolist()), abs=1e-11)
    stacked = np.stack([mixed, 2 * mixed])
    assert kahan_sum(stacked, axis=1).shape == (2,)

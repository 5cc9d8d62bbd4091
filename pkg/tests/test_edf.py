from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from staggered_qtt.edf import Edf, WeightedEdf, ceil_rank, rank_transform, step_integral, weighted_cdf
from staggered_qtt.errors import EmptyGroup, TauOutOfRange, ZeroTotalWeight

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
samples = st.lists(finite, min_size=1, max_size=30)
levels = st.fractions(min_value=Fraction(1, 10**6), max_value=1, max_denominator=10**6)


def test_cdf_counts():
    e = Edf([1, 2, 3, 4])
    assert e.cdf_at(2) == 0.5
    assert e.cdf_at(0.5) == 0.0
    assert e.cdf_at(4) == 1.0
    assert e.cdf_at(100) == 1.0


def test_cdf_with_ties():
    assert Edf([1, 1, 2]).cdf_at(1) == pytest.approx(2 / 3, abs=0)


def test_quantile_order_statistics():
    e = Edf([4, 1, 3, 2])
    assert e.quantile(0.5) == 2
    assert e.quantile(0.25) == 1
    assert e.quantile(1.0) == 4
    assert e.quantile(0.26) == 2
    np.testing.assert_array_equal(e.quantile([0.1, 0.75, 0.76]), [1, 3, 4])


@pytest.mark.parametrize("tau", [0.0, -0.1, 1.0000001, float("nan")])
def test_quantile_rejects_levels_outside_unit_interval(tau):
    with pytest.raises(TauOutOfRange):
        Edf([1.0]).quantile(tau)


def test_empty_sample_rejected():
    with pytest.raises(EmptyGroup):
        Edf([])


def test_ceil_rank_snaps_float_noise():
    assert ceil_rank(3, 2 / 3) == 2
    assert ceil_rank(10, 0.3) == 3
    assert ceil_rank(10, 0.30001) == 4
    assert ceil_rank(5, 1e-9) == 1


def test_quantile_at_count_is_exact_integer_level():
    e = Edf([10, 20, 30])
    # level 2/3 must hit the second order statistic
    assert e.quantile_at_count(2, 3) == 20
    assert e.quantile_at_count(0, 3) == 10
    assert e.quantile_at_count(3, 3) == 30


def test_quantile_commutes_with_increasing_map():
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.normal(size=int(rng.integers(1, 25)))
        tau = rng.uniform(0.001, 1.0)
        g = np.cbrt  # strictly increasing; same routine on both sides
        assert Edf(g(x)).quantile(tau) == g(Edf(x).quantile(tau))


@given(samples, levels)
def test_quantile_matches_brute_force(sample, u):
    exact = oracles.quantile([oracles.frac(v) for v in sample], u)
    assert Edf(sample).quantile_at_count(u.numerator, u.denominator) == float(exact)


@given(samples, levels, levels)
def test_quantile_monotone(sample, a, b):
    lo, hi = sorted((float(a), float(b)))
    e = Edf(sample)
    assert e.quantile(lo) <= e.quantile(hi)


@given(samples, levels)
def test_cdf_of_quantile_reaches_level(sample, u):
    e = Edf(sample)
    assert e.cdf_at(e.quantile(float(u))) >= float(u) - 1e-12


@given(samples)
def test_quantile_of_cdf_returns_jump_point(sample):
    e = Edf(sample)
    for x in sample:
        assert e.quantile(e.cdf_at(x)) == x


@given(samples, st.integers(-1000, 1000))
def test_location_equivariance(sample, c):
    sample = [round(v) for v in sample]
    e, shifted = Edf(sample), Edf([v + c for v in sample])
    for tau in (0.01, 0.25, 0.5, 0.9, 1.0):
        assert shifted.quantile(tau) == e.quantile(tau) + c


def test_rank_transform_examples():
    ref, target = Edf([0, 2]), Edf([0, 1])
    np.testing.assert_array_equal(rank_transform(target, ref, [0, 2]), [0, 1])
    # values below the reference support are clamped to the smallest rank
    assert rank_transform(target, ref, [-5])[0] == 0
    assert np.all(rank_transform(Edf([7, 7, 7]), ref, [0, 1, 2, 9]) == 7)


@given(st.lists(finite, min_size=1, max_size=30, unique=True))
def test_rank_transform_identity_on_sample(sample):
    e = Edf(sample)
    np.testing.assert_array_equal(rank_transform(e, e, sample), sample)


@given(samples, samples, finite)
def test_rank_transform_matches_brute_force(target, reference, v):
    exact = oracles.rank_map([oracles.frac(x) for x in target],
                             [oracles.frac(x) for x in reference], oracles.frac(v))
    assert rank_transform(Edf(target), Edf(reference), [v])[0] == float(exact)


@given(samples, st.lists(finite, min_size=1, max_size=10))
def test_unit_weights_bit_exact(sample, queries):
    e, w = Edf(sample), WeightedEdf(sample, np.ones(len(sample)))
    for q in list(queries) + list(sample):
        assert w.cdf_at(q) == e.cdf_at(q)
    for tau in (1e-6, 0.1, 1 / 3, 0.5, 2 / 3, 0.99, 1.0):
        assert w.quantile(tau) == e.quantile(tau)


def test_weighted_degenerate():
    w = weighted_cdf([5, 9], [1, 0])
    assert w.cdf_at(5) == 1.0
    assert w.cdf_at(4.9) == 0.0
    assert w.quantile(1.0) == 5
    assert w.quantile(0.01) == 5


def test_zero_weight_points_never_returned():
    w = WeightedEdf([1, 2, 3], [0, 1, 1])
    assert w.quantile(1e-9) == 2
    np.testing.assert_array_equal(w.jump_points, [2, 3])


def test_zero_total_weight():
    with pytest.raises(ZeroTotalWeight):
        weighted_cdf([1, 2], [0, 0])


def test_weighted_rejects_bad_input():
    with pytest.raises(ValueError):
        WeightedEdf([1, 2], [1])
    with pytest.raises(ValueError):
        WeightedEdf([1, 2], [1, -1])


@settings(max_examples=200)
@given(st.lists(st.tuples(finite, st.integers(1, 50)), min_size=1, max_size=20), levels)
def test_weighted_quantile_matches_brute_force(pairs, u):
    pts = [p for p, _ in pairs]
    wts = [w for _, w in pairs]
    exact = oracles.wquantile([oracles.frac(p) for p in pts], [Fraction(w) for w in wts], u)
    assert WeightedEdf(pts, wts).quantile(float(u)) == float(exact)


def test_two_cell_propensity_weights_match_direct_sum():
    # two covariate cells with odds 1 and 3; weighted CDF of long differences
    delta = np.array([0.5, -1.0, 2.0, 1.0])
    odds = np.array([1.0, 1.0, 3.0, 3.0])
    w = WeightedEdf(delta, odds)
    for y in (-2, -1, 0, 0.5, 1, 2):
        direct = sum(o for d, o in zip(delta, odds) if d <= y) / odds.sum()
        assert w.cdf_at(y) == pytest.approx(direct, abs=1e-15)
    assert w.quantile(0.25) == 0.5
    assert w.quantile(0.26) == 1.0


def test_mean_and_step_integral():
    assert Edf([1, 2, 6]).mean() == 3.0
    assert WeightedEdf([1, 3], [3, 1]).mean() == 1.5
    assert step_integral([1, 3], [3, 1]) == 1.5

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synthbound.core import InvalidInputError
from synthbound.counts import CountVector, adjust_counts, sample_counts
from synthbound.generator import RegionMass


def test_sample_counts_deterministic_mass():
    mass = RegionMass(np.array([1.0, 0.0, 0.0]), 100)
    c = sample_counts(mass, 50, seed=0)
    np.testing.assert_array_equal(c.counts, [50, 0, 0])


def test_sample_counts_total_is_exact():
    mass = RegionMass(np.full(7, 1 / 7), 100)
    for seed in range(20):
        assert sample_counts(mass, 123, seed=seed).total == 123


def test_sample_counts_mean_matches_expectation():
    k = 5
    mass = RegionMass(np.full(k, 1 / k), 100)
    draws = np.stack([sample_counts(mass, k, seed=s).counts for s in range(10_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 1.0, atol=0.05)


def test_sample_counts_chi_square_fit():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    mass = RegionMass(p, 100)
    totals = np.zeros(4)
    for s in range(10_000):
        totals += sample_counts(mass, 8, seed=s).counts
    result = stats.chisquare(totals, p * totals.sum())
    assert result.pvalue > 0.001


def test_adjust_wide_band_is_identity():
    c = CountVector(np.array([40, 30, 20, 10]))
    out = adjust_counts(c, b=3.0)  # b >= K - 1
    np.testing.assert_array_equal(out.counts, c.counts)


def test_adjust_zero_band_forces_equality():
    c = CountVector(np.array([40, 30, 20, 10]))
    out = adjust_counts(c, b=0.0)
    np.testing.assert_array_equal(out.counts, [25, 25, 25, 25])


def test_adjust_hand_worked_band():
    # K=4, g=100, b=0.2: band is [ceil(20), floor(30)] = [20, 30]
    c = CountVector(np.array([40, 30, 20, 10]))
    out = adjust_counts(c, b=0.2)
    np.testing.assert_array_equal(out.counts, [30, 30, 20, 20])
    assert out.total == 100


def test_adjust_rejects_negative_band():
    with pytest.raises(InvalidInputError):
        adjust_counts(CountVector(np.array([1, 1])), b=-0.1)


def test_count_vector_rejects_negative():
    with pytest.raises(InvalidInputError):
        CountVector(np.array([1, -1]))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 12), st.integers(1, 500), st.floats(0, 5), st.integers(0, 10_000))
def test_adjust_band_invariant_and_idempotent(k, g, b, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k))
    drawn = sample_counts(RegionMass(p, 1), g, seed=seed)
    adjusted = adjust_counts(drawn, b)
    shares = adjusted.counts / g
    assert np.all(np.abs(shares - 1.0 / k) <= b / k + 1.0 / g + 1e-12)
    again = adjust_counts(adjusted, b, reference_total=g)
    np.testing.assert_array_equal(again.counts, adjusted.counts)

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from esnrecon.metrics import (compare_histograms, histogram_l1_distance, nrmse,
                              pdf_histogram, squared_error_series)
from esnrecon.training import physics_loss


# --- nrmse --------------------------------------------------------------------

def test_nrmse_zero_for_identical_series():
    truth = np.array([1.0, 2.0, 5.0, -3.0])
    assert nrmse(truth, truth) == 0.0


def test_nrmse_constant_offset():
    rng = np.random.default_rng(0)
    truth = rng.uniform(-5, 5, 100)
    span = truth.max() - truth.min()
    assert nrmse(truth + 0.7, truth) == pytest.approx(0.7 / span, rel=1e-12)


def test_nrmse_mean_estimate_of_two_level_series():
    truth = np.array([1.0, -1.0] * 50)
    estimate = np.zeros(100)
    assert nrmse(estimate, truth) == pytest.approx(0.5)


def test_nrmse_rejects_constant_truth():
    with pytest.raises(ValueError):
        nrmse(np.ones(5), np.ones(5))


def test_nrmse_rejects_length_mismatch():
    with pytest.raises(ValueError):
        nrmse(np.ones(4), np.ones(5))


@given(st.floats(min_value=0.01, max_value=100.0),
       st.floats(min_value=-50.0, max_value=50.0))
def test_nrmse_affine_invariance(scale, shift):
    rng = np.random.default_rng(7)
    truth = rng.uniform(-3, 3, 40)
    estimate = truth + rng.normal(size=40)
    base = nrmse(estimate, truth)
    mapped = nrmse(scale * estimate + shift, scale * truth + shift)
    assert mapped == pytest.approx(base, rel=1e-9, abs=1e-12)


# --- squared error series -------------------------------------------------------

def test_squared_error_identical_is_zero():
    a = np.random.default_rng(0).normal(size=(3, 20))
    np.testing.assert_array_equal(squared_error_series(a, a), np.zeros(20))


def test_squared_error_single_unit_difference():
    a = np.zeros((3, 5))
    b = np.zeros((3, 5))
    b[1, 2] = 1.0
    expected = np.zeros(5)
    expected[2] = 1.0
    np.testing.assert_array_equal(squared_error_series(a, b), expected)


def test_squared_error_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    np.testing.assert_array_equal(squared_error_series(a, b),
                                  squared_error_series(b, a))


def test_squared_error_mean_matches_loss_normalization():
    rng = np.random.default_rng(2)
    residuals = rng.normal(size=(3, 30))
    series = squared_error_series(residuals, np.zeros_like(residuals))
    assert np.mean(series) == pytest.approx(physics_loss(residuals) * 3, rel=1e-12)


def test_squared_error_shape_mismatch():
    with pytest.raises(ValueError):
        squared_error_series(np.ones((2, 4)), np.ones((3, 4)))


# --- histograms ------------------------------------------------------------------

def test_histogram_uniform_samples_pass_chi_square():
    rng = np.random.default_rng(3)
    samples = rng.uniform(0.0, 1.0, 100000)
    edges, density = pdf_histogram(samples, 10, span=(0.0, 1.0))
    counts = density * np.diff(edges) * samples.size
    chi2 = np.sum((counts - 10000.0) ** 2 / 10000.0)
    assert chi2 < stats.chi2.ppf(0.95, df=9)


@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=2**31))
def test_histogram_unit_integral(n_bins, seed):
    samples = np.random.default_rng(seed).normal(size=500)
    edges, density = pdf_histogram(samples, n_bins)
    assert np.sum(density * np.diff(edges)) == pytest.approx(1.0, abs=1e-9)


def test_histogram_constant_series_single_bin():
    edges, density = pdf_histogram(np.full(10, 4.2), 50)
    assert density.size == 1
    assert np.sum(density * np.diff(edges)) == pytest.approx(1.0)


def test_histogram_rejects_bad_input():
    with pytest.raises(ValueError):
        pdf_histogram(np.array([]), 10)
    with pytest.raises(ValueError):
        pdf_histogram(np.ones(5), 0)


def test_l1_distance_zero_for_identical():
    samples = np.random.default_rng(4).normal(size=1000)
    comp = compare_histograms("v", "train", samples, samples, 20)
    assert comp.l1_distance == 0.0


def test_l1_distance_of_disjoint_densities_is_two():
    edges = np.array([0.0, 1.0, 2.0])
    a = np.array([1.0, 0.0])
    b = np.array([0.0, 1.0])
    assert histogram_l1_distance(edges, a, b) == pytest.approx(2.0)


def test_compare_histograms_shares_bins():
    rng = np.random.default_rng(5)
    comp = compare_histograms("v", "test", rng.normal(size=500),
                              rng.normal(size=500) + 3.0, 25)
    assert comp.edges.size == 26
    assert np.sum(comp.truth_density * np.diff(comp.edges)) == pytest.approx(1.0)
    assert np.sum(comp.estimate_density * np.diff(comp.edges)) == pytest.approx(1.0)

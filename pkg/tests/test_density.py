import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import trapezoid

from nodecal import density
from nodecal.density import MarginalDensity, expectation_std, marginal, mle, peak_stats
from oracles import fwhm, gaussian_pdf


def gaussian_density(mu, s, n=401, lo=None, hi=None):
    lo = mu - 6 * s if lo is None else lo
    hi = mu + 6 * s if hi is None else hi
    g = np.linspace(lo, hi, n)
    return MarginalDensity("x", g, gaussian_pdf(g, mu, s), 0.0)


def test_exponential_weighting_picks_low_loss():
    md = marginal(np.array([0.2, 0.9]), np.array([0.0, 50.0]), 0, n_bins=8)
    assert md.density[0] / md.density[-1] > 1e15
    assert mle(md) == pytest.approx(0.2)


def test_gaussian_samples_recover_gaussian():
    rng = np.random.default_rng(0)
    x = rng.normal(1.5, 1.0, 10_000)
    md = marginal(x, np.zeros_like(x), 0)
    assert np.max(np.abs(md.density - gaussian_pdf(md.grid, 1.5, 1.0))) < 0.05


def test_weighted_uniform_samples_recover_gaussian():
    rng = np.random.default_rng(1)
    x = rng.uniform(-4, 4, 20_000)
    md = marginal(x, 0.5 * x**2, 0, n_bins=200)
    assert md.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(md.density - gaussian_pdf(md.grid, 0, 1))) < 0.05


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        marginal(np.array([1.0, np.nan]), np.array([0.0, 0.0]), 0)


def test_underflow_without_shift_rejected():
    with pytest.raises(ValueError, match="shift"):
        density.loss_weights(np.array([1e4, 2e4]), shift=False)
    assert density.loss_weights(np.array([1e4, 2e4]))[0] == 1.0


def test_identical_samples_give_valid_density():
    md = marginal(np.full(5, 2.0), np.zeros(5), 0)
    assert md.integral() == pytest.approx(1.0)
    assert mle(md) == pytest.approx(2.0, abs=1e-2)


def test_mle_single_bump_and_ties():
    assert mle(gaussian_density(2.0, 0.1)) == pytest.approx(2.0)
    g = np.linspace(0, 1, 5)
    assert mle(MarginalDensity("x", g, np.array([0, 1, 0, 1, 0.0]), 0.0)) == 0.25


def test_expectation_symmetric_and_uniform():
    mean, _ = expectation_std(gaussian_density(-0.7, 0.2))
    assert mean == pytest.approx(-0.7, abs=1e-12)
    g = np.linspace(0, 1, 1001)
    mean, std = expectation_std(MarginalDensity("u", g, np.ones_like(g), 0.0))
    assert mean == pytest.approx(0.5) and std == pytest.approx(1 / np.sqrt(12), rel=1e-5)


def test_expectation_of_discretized_normal():
    mean, std = expectation_std(gaussian_density(1.2, 0.1, n=201))
    assert mean == pytest.approx(1.2, abs=1e-6)
    assert std == pytest.approx(0.1, abs=0.1 * 12 / 200)


@pytest.mark.parametrize("n_bins", [50, 100, 200])
def test_fwhm_of_gaussian(n_bins):
    md = gaussian_density(0.0, 0.5, n=n_bins)
    stats = peak_stats(md)
    cell = md.grid[1] - md.grid[0]
    assert stats.count == 1
    assert abs(stats.peaks[0].width - fwhm(0.5)) < cell


def test_two_equal_bumps():
    g = np.linspace(-5, 5, 1001)
    d = gaussian_pdf(g, -2, 0.3) + gaussian_pdf(g, 2, 0.3)
    stats = peak_stats(MarginalDensity("x", g, d / trapezoid(d, g), 0.0))
    assert stats.count == 2
    assert stats.peaks[0].width == pytest.approx(stats.peaks[1].width, rel=1e-9)
    assert stats.to_dict()["std_width"] == pytest.approx(0.0, abs=1e-9)


def test_small_bumps_below_threshold_ignored():
    g = np.linspace(-5, 5, 1001)
    d = gaussian_pdf(g, 0, 0.3) + 0.02 * gaussian_pdf(g, 3, 0.3)
    assert peak_stats(MarginalDensity("x", g, d, 0.0), 0.05).count == 1
    assert peak_stats(MarginalDensity("x", g, d, 0.0), 0.01).count == 2


def test_flat_density_has_no_peaks():
    g = np.linspace(0, 1, 11)
    assert peak_stats(MarginalDensity("x", g, np.zeros(11), 0.0)).count == 0


def test_edge_peak_is_detected():
    g = np.linspace(0, 1, 101)
    stats = peak_stats(MarginalDensity("x", g, np.exp(-g / 0.1), 0.0))
    assert stats.count == 1 and stats.peaks[0].location == 0.0 and stats.peaks[0].width > 0


samples = arrays(np.float64, st.integers(2, 60), elements=st.floats(-10, 10))


@settings(max_examples=50, deadline=None)
@given(samples, st.integers(0, 10_000), st.integers(5, 150))
def test_density_normalized_and_nonnegative(x, seed, n_bins):
    J = np.random.default_rng(seed).uniform(0, 30, x.size)
    md = marginal(x, J, 0, n_bins=n_bins)
    assert md.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.all(md.density >= 0)
    stats = peak_stats(md)
    for p in stats.peaks:
        assert p.width > 0 and md.grid[0] <= p.location <= md.grid[-1]


@settings(max_examples=40, deadline=None)
@given(samples, st.integers(0, 10_000), st.floats(0.1, 20))
def test_raising_a_loss_never_raises_its_contribution(x, seed, bump):
    rng = np.random.default_rng(seed)
    J = rng.uniform(0, 5, x.size)
    k = int(rng.integers(x.size))
    J2 = J.copy()
    J2[k] += bump
    share = lambda J: density.loss_weights(J) / density.loss_weights(J).sum()
    g = np.linspace(x.min() - 1, x.max() + 1, 30)
    h1 = density._linear_binning(x[k:k + 1], share(J)[k:k + 1], g)
    h2 = density._linear_binning(x[k:k + 1], share(J2)[k:k + 1], g)
    assert np.all(h2 <= h1 * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(samples, st.integers(0, 10_000))
def test_binning_and_smoothing_preserve_mass(x, seed):
    w = np.random.default_rng(seed).uniform(0.1, 1, x.size)
    g = np.linspace(x.min() - 0.5, x.max() + 0.5, 40)
    h = density._linear_binning(x, w, g)
    assert h.sum() == pytest.approx(w.sum(), rel=1e-12)
    K = np.exp(-0.5 * ((g[:, None] - g[None, :]) / 0.7) ** 2)
    K /= K.sum(axis=0, keepdims=True)
    assert (K @ h).sum() == pytest.approx(h.sum(), rel=1e-12)
    assert np.all(K @ h >= 0)

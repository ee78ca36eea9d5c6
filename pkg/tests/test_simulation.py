"""Long-memory panel generator and the Monte Carlo harness."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from wavewhittle.errors import DomainError, NonPDMatrix, ResourceLimit, WaveWhittleError
from wavewhittle.estimation import scale_covariances
from wavewhittle.simulation import (
    EstimationConfig,
    SimulationSpec,
    circulant_fractional_noise,
    fractional_acvf,
    fractional_ma_coefficients,
    monte_carlo,
    replicate_rng,
    simulate_mvlm,
    with_seed,
)
from wavewhittle.wavelets import build_daubechies_filters, pyramid_transform


def _acf0(x, lags):
    # zero-mean autocorrelation: the simulated mean is known to be 0
    return np.array([np.dot(x[: x.size - k], x[k:]) for k in lags]) / np.dot(x, x)


# -- coefficients and autocovariances


def test_ma_coefficients_small():
    np.testing.assert_array_equal(fractional_ma_coefficients(0.0, 5), [1, 0, 0, 0, 0, 0])
    psi = fractional_ma_coefficients(0.4, 3)
    np.testing.assert_allclose(psi[:3], [1.0, 0.4, 0.28], rtol=1e-15)


@pytest.mark.parametrize("d", [0.5, -0.5, 0.7])
def test_ma_domain(d):
    with pytest.raises(DomainError):
        fractional_ma_coefficients(d, 10)


def test_ma_energy_matches_gamma_closed_form():
    g0 = lambda d: math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))  # noqa: E731
    T = 10 ** 5
    assert np.sum(fractional_ma_coefficients(0.2, T) ** 2) == pytest.approx(g0(0.2), abs=1e-3)
    # at d = 0.4 the terms decay like k^(2d - 2); the dropped tail is about 0.1,
    # so the comparison adds its integral approximation
    psi = fractional_ma_coefficients(0.4, T)
    tail = T ** (2 * 0.4 - 1) / ((1 - 2 * 0.4) * special.gamma(0.4) ** 2)
    assert np.sum(psi ** 2) + tail == pytest.approx(g0(0.4), abs=1e-3)


@pytest.mark.parametrize("d", [-0.3, 0.1, 0.45])
def test_acvf_gamma_formula(d):
    k = np.arange(0, 60)
    ref = np.exp(special.gammaln(1 - 2 * d) + special.gammaln(k + d) - special.gammaln(d)
                 - special.gammaln(1 - d) - special.gammaln(k + 1 - d)) * np.sign(special.gamma(d)) ** 1
    ref[0] = math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))
    np.testing.assert_allclose(fractional_acvf(d, k), ref, rtol=1e-10)
    np.testing.assert_array_equal(fractional_acvf(d, -k), fractional_acvf(d, k))


# -- spec validation


def test_spec_validation():
    with pytest.raises(ValueError):
        SimulationSpec(d=(0.1, 0.2), omega=((1.0,),), N_X=100)
    with pytest.raises(DomainError):
        SimulationSpec(d=(1.5,), omega=((1.0,),), N_X=100)
    with pytest.raises(DomainError):
        SimulationSpec(d=(0.8,), omega=((1.0,),), N_X=100, differencing=(0,))
    with pytest.raises(ValueError):
        SimulationSpec(d=(0.1,), omega=((1.0,),), N_X=100, ar_phi=1.0)
    s = SimulationSpec(d=(0.8, 0.1), omega=np.eye(2), N_X=100)
    assert s.differencing == (1, 0)
    assert s.truncation == 2 ** 16
    assert SimulationSpec.from_dict(s.to_dict()) == s
    assert with_seed(s, 9).seed == 9


def test_nonpd_omega():
    s = SimulationSpec(d=(0.1, 0.1), omega=((1.0, 2.0), (2.0, 1.0)), N_X=64)
    with pytest.raises(NonPDMatrix):
        simulate_mvlm(s)


def test_budget_and_truncation_guards():
    s = SimulationSpec(d=(0.1,), omega=((1.0,),), N_X=1000, ma_truncation=5000)
    with pytest.raises(ValueError):
        simulate_mvlm(s)
    with pytest.raises(ResourceLimit):
        simulate_mvlm(SimulationSpec(d=(0.1,), omega=((1.0,),), N_X=1000), budget=10 ** 6)


# -- generator


def test_seed_determinism():
    s = SimulationSpec(d=(0.3, 0.1), omega=((1.0, 0.2), (0.2, 2.0)), N_X=512, seed=42)
    assert np.array_equal(simulate_mvlm(s).values, simulate_mvlm(s).values)
    assert not np.array_equal(simulate_mvlm(s).values, simulate_mvlm(with_seed(s, 43)).values)
    a = replicate_rng(1, 5).standard_normal(3)
    assert np.array_equal(a, replicate_rng(1, 5).standard_normal(3))
    assert not np.array_equal(a, replicate_rng(1, 6).standard_normal(3))


def test_integrated_component_is_cumsum():
    s1 = SimulationSpec(d=(0.8,), omega=((1.0,),), N_X=512, seed=1)
    s0 = SimulationSpec(d=(-0.2,), omega=((1.0,),), N_X=512, seed=1)
    x1, x0 = simulate_mvlm(s1).values[:, 0], simulate_mvlm(s0).values[:, 0]
    np.testing.assert_allclose(np.diff(x1), x0[1:], rtol=1e-12, atol=1e-12)


def test_white_noise_lag_one():
    s = SimulationSpec(d=(0.0,), omega=((1.0,),), N_X=4096)
    hits = [abs(_acf0(simulate_mvlm(s, replicate_rng(3, r)).values[:, 0], [1])[0]) < 3 / 64 for r in range(100)]
    assert np.mean(hits) >= 0.97


def test_innovation_scale():
    # innovations carry covariance 2 pi omega, so white noise has variance 2 pi omega
    s = SimulationSpec(d=(0.0, 0.0), omega=((1.0, 0.5), (0.5, 2.0)), N_X=2 ** 16, seed=4)
    C = np.cov(simulate_mvlm(s).values.T)
    np.testing.assert_allclose(C / (2 * np.pi), [[1.0, 0.5], [0.5, 2.0]], rtol=0.03, atol=0.02)


def test_truncated_filter_acf_close_to_closed_form():
    d, T = 0.4, 2 ** 16
    psi = fractional_ma_coefficients(d, T)
    g = np.array([np.dot(psi[: psi.size - k], psi[k:]) for k in range(21)])
    ref = fractional_acvf(d, np.arange(21))
    np.testing.assert_allclose(g / g[0], ref / ref[0], atol=0.05)


@pytest.mark.slow
def test_sample_acf_tracks_closed_form():
    s = SimulationSpec(d=(0.4,), omega=((1.0,),), N_X=2 ** 15, seed=3)
    lags = np.arange(21)
    acf = np.mean([_acf0(simulate_mvlm(s, replicate_rng(3, r)).values[:, 0], lags) for r in range(40)], axis=0)
    ref = fractional_acvf(0.4, lags)
    np.testing.assert_allclose(acf, ref / ref[0], atol=0.05)


def test_cross_correlation_equal_memory():
    s = SimulationSpec(d=(0.3, 0.3), omega=((1.0, 0.5), (0.5, 1.0)), N_X=2 ** 13, seed=8)
    rs = [np.corrcoef(simulate_mvlm(s, replicate_rng(8, r)).values.T)[0, 1] for r in range(20)]
    assert np.mean(rs) == pytest.approx(0.5, abs=0.05)


def test_stationarity_surrogate():
    s = SimulationSpec(d=(0.3,), omega=((1.0,),), N_X=4096)
    ratios = []
    for r in range(50):
        x = simulate_mvlm(s, replicate_rng(11, r)).values[:, 0]
        ratios.append(np.var(x[:2048]) / np.var(x[2048:]))
    assert 0.8 <= np.median(ratios) <= 1.25


def test_wavelet_variance_slope():
    fam = build_daubechies_filters(4)
    s = SimulationSpec(d=(0.1, 0.35), omega=np.eye(2), N_X=2 ** 14)
    logs = []
    for r in range(30):
        cs = scale_covariances(pyramid_transform(simulate_mvlm(s, replicate_rng(2, r)), fam, 3, 9))
        logs.append([np.log2(np.diag(cs.sigma_hat[j])) for j in cs.scales])
    mean = np.mean(logs, axis=0)
    for a, d in enumerate((0.1, 0.35)):
        assert np.polyfit(np.arange(3, 10), mean[:, a], 1)[0] == pytest.approx(2 * d, abs=0.1)


def test_optional_filters_run():
    s = SimulationSpec(d=(0.2,), omega=((1.0,),), N_X=1024, ar_phi=0.5, innovation="exponential", seed=3)
    x = simulate_mvlm(s).values
    assert x.shape == (1024, 1) and np.all(np.isfinite(x))


@settings(max_examples=10, deadline=None)
@given(d=st.floats(-0.45, 0.45), seed=st.integers(0, 1000))
def test_circulant_variance(d, seed):
    rng = np.random.default_rng(seed)
    x = np.array([circulant_fractional_noise(64, d, rng) for _ in range(400)])
    assert np.mean(x ** 2) == pytest.approx(fractional_acvf(d, [0])[0], rel=0.1)


def test_circulant_domain():
    with pytest.raises(DomainError):
        circulant_fractional_noise(64, 0.5, np.random.default_rng(0))


# -- harness


def test_mc_structure_and_worker_independence():
    s = SimulationSpec(d=(0.2, 0.2), omega=((1.0, 0.3), (0.3, 1.0)), N_X=2048, seed=6)
    a = monte_carlo(s, 12, EstimationConfig(), workers=1)
    b = monte_carlo(s, 12, EstimationConfig(), workers=2)
    assert np.array_equal(a.d_hat, b.d_hat)
    assert a.replicates == 12 and a.failures == 0
    for key in ("d", "r"):
        assert np.all((0 <= a.coverage[key]) & (a.coverage[key] <= 1))
        assert set(a.normality_stats[key]) == {"skewness", "excess_kurtosis", "ks"}
    assert a.empirical_sd["d"].shape == (2,)
    assert "d_empirical_weights" in a.theoretical_sd


def test_mc_failures_counted():
    s = SimulationSpec(d=(0.1,), omega=((1.0,),), N_X=64)
    with pytest.raises(WaveWhittleError):
        monte_carlo(s, 5, EstimationConfig(j0=3, j1=6))
    with pytest.raises(ValueError):
        monte_carlo(s, 0)


def test_mc_circulant_mode():
    s = SimulationSpec(d=(0.3,), omega=((1.0,),), N_X=2048, seed=1)
    summ = monte_carlo(s, 10, EstimationConfig(method="circulant"))
    assert summ.d_hat.shape == (10, 1)


@pytest.mark.slow
def test_mc_white_noise_sd():
    s = SimulationSpec(d=(0.0,), omega=((1.0,),), N_X=2 ** 12, seed=21)
    summ = monte_carlo(s, 500)
    assert summ.empirical_sd["d"][0] == pytest.approx(summ.theoretical_sd["d"][0], rel=0.15)

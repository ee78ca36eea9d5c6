"""End-to-end fit of a panel."""
import numpy as np
import pytest

from wavewhittle.asymptotics import confidence_intervals
from wavewhittle.inference import fit
from wavewhittle.kernels import INF
from wavewhittle.simulation import SimulationSpec, simulate_mvlm


@pytest.fixture(scope="module")
def result():
    spec = SimulationSpec(d=(0.2, 0.35, 0.3), omega=((1.0, 0.4, 0.1), (0.4, 1.0, 0.2), (0.1, 0.2, 1.0)),
                          N_X=4096, seed=12)
    return fit(simulate_mvlm(spec), j0=3)


def test_result_invariants(result):
    p = 3
    assert result.d_hat.shape == (p,)
    for M in (result.G_hat, result.omega_hat, result.r_hat):
        np.testing.assert_allclose(M, M.T, atol=1e-14)
    np.testing.assert_array_equal(np.diag(result.r_hat), 1.0)
    assert np.all(np.abs(result.r_hat) <= 1)
    assert np.min(np.linalg.eigvalsh(result.d_cov)) >= -1e-8
    assert result.joint_cov.shape == (p + p * p, p + p * p)
    assert result.asymptotics["infinite"].W_joint is None
    assert np.isfinite(result.criterion_value)


def test_intervals_cover_estimate(result):
    ci = result.intervals(0.9)
    assert np.all(ci["d"].lower < result.d_hat) and np.all(result.d_hat < ci["d"].upper)
    alt = confidence_intervals(result, level=0.9)
    np.testing.assert_array_equal(alt["d"].upper, ci["d"].upper)
    wide = result.intervals(0.99, mode="infinite")
    assert wide["r"].sd.shape == (3, 3)


def test_modes_and_weights(result):
    x = simulate_mvlm(SimulationSpec(d=(0.3,), omega=((1.0,),), N_X=4096, seed=2))
    a = fit(x, modes=("infinite",))
    assert a.primary == "infinite" and a.asymptotics["infinite"].Delta == INF
    b = fit(x, variance_weights="empirical")
    c = fit(x)
    assert b.d_hat == pytest.approx(c.d_hat)
    assert b.d_cov[0, 0] != c.d_cov[0, 0]
    with pytest.raises(ValueError):
        fit(x, variance_weights="other")
    with pytest.raises(ValueError):
        fit(x, Delta=2, variance_weights="empirical")

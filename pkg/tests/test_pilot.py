import numpy as np
import pytest

from tmmse.channel import correlation_from_betas
from tmmse.config import ConfigurationError, CorrelationModel, SystemConfig
from tmmse.pilot import (
    PilotAssignment,
    assign_pilots,
    estimator_statistics,
    pilot_observation,
)

from conftest import make_estimates


def test_orthogonal_assignment():
    a = assign_pilots(SystemConfig(num_ues=10, pilot_length=10), np.random.default_rng(0))
    assert sorted(a.pilots) == list(range(10))
    assert all(list(a.coherence_set(k)) == [k] for k in range(10))


def test_single_pilot_shared():
    a = assign_pilots(SystemConfig(num_ues=2, pilot_length=1), np.random.default_rng(0))
    assert list(a.pilots) == [0, 0]
    assert list(a.coherence_set(0)) == [0, 1] == list(a.coherence_set(1))


@pytest.mark.parametrize("seed", range(5))
def test_contaminated_assignment_covers_pilots(seed):
    config = SystemConfig(num_ues=4, pilot_length=2)
    a = assign_pilots(config, np.random.default_rng(seed))
    b = assign_pilots(config, np.random.default_rng(seed))
    np.testing.assert_array_equal(a.pilots, b.pilots)
    assert set(a.pilots) == {0, 1}
    for k in range(4):
        assert k in a.coherence_set(k)


def test_noiseless_observation_superposes(rng):
    config = SystemConfig(num_aps=1, num_ues=3, antennas_per_ap=2, pilot_length=2, noise_power=1e-300)
    h = rng.standard_normal((1, 1, 3, 2)) + 1j * rng.standard_normal((1, 1, 3, 2))
    z = pilot_observation(h, PilotAssignment(np.array([0, 0, 1])), config, rng)
    scale = np.sqrt(config.tx_power * 2)
    np.testing.assert_allclose(z[0, 0, 0], scale * (h[0, 0, 0] + h[0, 0, 1]))
    np.testing.assert_allclose(z[0, 0, 1], scale * h[0, 0, 2])


def test_observation_second_moment(rng):
    config = SystemConfig(num_aps=1, num_ues=2, antennas_per_ap=2, pilot_length=1, noise_power=1e-12)
    corr, _, _, _ = make_estimates(config, [[1e-12], [3e-12]], [0, 0], 1, rng)
    from tmmse.channel import sample_channel
    h = sample_channel(corr, rng, 100_000)
    z = pilot_observation(h, PilotAssignment(np.array([0, 0])), config, rng)[:, 0, 0]
    sample = np.einsum("tm,tn->mn", z, np.conj(z)) / len(z)
    expected = config.tx_power * (corr.R[0, 0] + corr.R[0, 1]) + config.noise_power * np.eye(2)
    np.testing.assert_allclose(sample, expected, rtol=0.05, atol=0.02 * np.abs(expected).max())


def _scalar_config(**kw):
    return SystemConfig(num_aps=1, antennas_per_ap=1, tx_power=0.2, noise_power=1e-3, **kw)


def test_scalar_estimate_quality():
    config = _scalar_config(num_ues=1, pilot_length=1)
    beta = 0.01
    corr = correlation_from_betas(np.array([[beta]]), 1)
    stats = estimator_statistics(corr, PilotAssignment(np.array([0])), config)
    pt = 0.2
    assert stats.Q[0, 0, 0, 0].real == pytest.approx(pt * beta**2 / (pt * beta + 1e-3))


def test_scalar_contaminated_estimate_quality():
    config = _scalar_config(num_ues=2, pilot_length=1)
    beta = 0.01
    corr = correlation_from_betas(np.array([[beta], [beta]]), 1)
    stats = estimator_statistics(corr, PilotAssignment(np.array([0, 0])), config)
    q = pt = 0.2
    expected = pt * beta**2 / (2 * pt * beta + 1e-3)
    np.testing.assert_allclose(stats.Q[0, :, 0, 0].real, expected)
    assert expected < beta and q > 0


def test_noiseless_limit_is_perfect():
    config = SystemConfig(num_aps=1, num_ues=1, antennas_per_ap=2, pilot_length=1, noise_power=1e-30)
    corr = correlation_from_betas(np.array([[1e-6]]), 2)
    stats = estimator_statistics(corr, PilotAssignment(np.array([0])), config)
    np.testing.assert_allclose(stats.Q, corr.R, rtol=1e-9)
    assert np.abs(stats.C).max() < 1e-14


def test_q_plus_c_is_r_and_psd():
    config = SystemConfig(num_aps=3, num_ues=4, antennas_per_ap=3, pilot_length=2)
    betas = np.random.default_rng(1).uniform(1e-11, 1e-8, (4, 3))
    corr = correlation_from_betas(betas, 3, CorrelationModel("exponential", 0.5))
    stats = estimator_statistics(corr, PilotAssignment(np.array([0, 1, 0, 1])), config)
    np.testing.assert_array_equal(stats.Q + stats.C, corr.R)
    for M in (stats.Q, stats.C):
        assert np.linalg.eigvalsh(M).min() > -1e-12 * np.abs(corr.R).max()


def test_singular_observation_covariance_is_configuration_error():
    config = SystemConfig(num_aps=1, num_ues=1, antennas_per_ap=2, pilot_length=1, noise_power=1e-320)
    corr = correlation_from_betas(np.array([[0.0]]), 2)
    with pytest.raises(ConfigurationError):
        estimator_statistics(corr, PilotAssignment(np.array([0])), config)


def test_estimate_statistics_and_orthogonality(rng):
    """Sample covariances of estimate and error match Q and C; they are uncorrelated."""
    config = SystemConfig(num_aps=1, num_ues=2, antennas_per_ap=2, pilot_length=1)
    corr, _, h, est = make_estimates(config, [[2e-11], [5e-12]], [0, 0], 100_000, rng,
                                     CorrelationModel("exponential", 0.4))
    n = len(h)
    for k in range(2):
        hh, err = est.hhat[:, 0, k], h[:, 0, k] - est.hhat[:, 0, k]
        scale = np.linalg.norm(corr.R[0, k])
        Q, C = est.Q[0, k], est.C[0, k]
        assert np.abs(np.einsum("tm,tn->mn", hh, hh.conj()) / n - Q).max() < 0.05 * scale
        assert np.abs(np.einsum("tm,tn->mn", err, err.conj()) / n - C).max() < 0.05 * scale
        assert np.abs(np.einsum("tm,tn->mn", hh, err.conj()) / n).max() < 0.05 * scale


def test_contaminated_estimates_are_proportional(rng):
    config = SystemConfig(num_aps=1, num_ues=2, antennas_per_ap=1, pilot_length=1)
    corr, _, _, est = make_estimates(config, [[3e-10], [7e-11]], [0, 0], 50, rng)
    ratio = est.hhat[:, 0, 1, 0] / est.hhat[:, 0, 0, 0]
    R, psi = corr.R[0, :, 0, 0], est.psi[0, :, 0, 0]
    np.testing.assert_allclose(ratio, (R[1] * psi[1]) / (R[0] * psi[0]), rtol=1e-12)

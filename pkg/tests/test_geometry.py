import numpy as np
import pytest

from tmmse.config import SystemConfig
from tmmse.geometry import (
    deploy,
    deployment_from_positions,
    large_scale_fading,
    path_loss_db,
    shadowing_covariance,
    shadowing_field,
)


@pytest.mark.parametrize("d, expected", [(0.0, -81.2), (5.0, -81.2), (10.0, -81.2), (100.0, -105.7)])
def test_path_loss_values(d, expected):
    assert path_loss_db(d) == pytest.approx(expected, abs=1e-12)


def test_path_loss_continuous_at_ten_and_monotone():
    assert path_loss_db(10.0 - 1e-9) == pytest.approx(path_loss_db(10.0), abs=1e-6)
    for lo, hi in ((10.0, 50.0 - 1e-9), (50.0, 2000.0)):
        assert np.all(np.diff(path_loss_db(np.linspace(lo, hi, 5000))) <= 0)
    # the two outer slopes meet within 0.02 dB at 50 m
    assert abs(path_loss_db(50.0) - path_loss_db(50.0 - 1e-9)) < 0.02


def test_path_loss_rejects_negative():
    with pytest.raises(ValueError):
        path_loss_db(-1.0)


def test_deploy_positions_inside_square(rng):
    config = SystemConfig(num_aps=30, num_ues=7, area_side=500.0)
    dep = deploy(config, rng)
    for pos in (dep.ap_positions, dep.ue_positions):
        assert pos.min() >= 0.0 and pos.max() <= 500.0
    assert dep.betas.shape == (7, 30)
    assert np.all(dep.betas > 0)


def test_colocated_pair_uses_first_slope():
    config = SystemConfig(num_aps=1, num_ues=1)
    dep = deployment_from_positions([[250.0, 250.0]], [[250.0, 250.0]], config, np.random.default_rng(0))
    assert dep.betas[0, 0] == pytest.approx(10 ** -8.12, rel=1e-12)


def test_deploy_is_deterministic():
    config = SystemConfig(num_aps=12, num_ues=5)
    a = deploy(config, np.random.default_rng(3))
    b = deploy(config, np.random.default_rng(3))
    np.testing.assert_array_equal(a.betas, b.betas)
    np.testing.assert_array_equal(a.ap_positions, b.ap_positions)
    np.testing.assert_array_equal(large_scale_fading(a.distances, a.shadowing), a.betas)


def test_shadowing_only_beyond_fifty_metres():
    d = np.array([[5.0, 30.0, 80.0]])
    F = np.full((1, 3), 6.0)
    beta_db = 10 * np.log10(large_scale_fading(d, F))
    np.testing.assert_allclose(beta_db[0, :2], path_loss_db(d[0, :2]))
    assert beta_db[0, 2] == pytest.approx(path_loss_db(80.0) + 6.0)


def test_covariance_diagonal_and_far_limit():
    config = SystemConfig(num_aps=2, num_ues=2)
    cov = shadowing_covariance(np.array([[0.0, 0.0], [1e6, 0.0]]), np.array([[0.0, 1e6], [1e6, 1e6]]), config)
    np.testing.assert_allclose(np.diag(cov), 64.0)
    # (k=0, l=0) against (k=1, l=1): both UEs and APs far apart
    assert cov[0, 3] == pytest.approx(0.0, abs=1e-12)
    # same UE, far APs: only the UE kernel remains
    assert cov[0, 1] == pytest.approx(32.0)


def test_shadowing_sample_covariance_matches_model():
    config = SystemConfig(num_aps=2, num_ues=2)
    ue = np.array([[100.0, 100.0], [160.0, 180.0]])
    ap = np.array([[300.0, 120.0], [220.0, 250.0]])
    F, clipped = shadowing_field(ue, ap, config, np.random.default_rng(11), size=100_000)
    assert clipped < 1e-9
    sample = np.cov(F.reshape(len(F), -1), rowvar=False)
    model = shadowing_covariance(ue, ap, config)
    np.testing.assert_allclose(sample, model, rtol=0.05)


def test_shadowing_variance_over_drops():
    config = SystemConfig(num_aps=4, num_ues=3)
    draws = np.array([deploy(config, np.random.default_rng(s)).shadowing for s in range(3000)])
    assert abs(draws.var() / 64.0 - 1.0) < 0.05

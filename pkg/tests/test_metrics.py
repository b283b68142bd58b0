import numpy as np
import pytest

from simcal.metrics import (
    MetricSeries, MetricsError, beamforming_gain_db, calibrated_precoder,
    empirical_cdf, percentile, phase_error_deg, phase_rmse_deg,
    spectral_efficiency,
)


def test_mrt_per_port_is_phase_conjugate():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    W = calibrated_precoder(h, kind="mrt", power_mode="per_port")
    np.testing.assert_allclose(np.abs(W), 1.0)
    np.testing.assert_allclose(np.angle(W), -np.angle(h))


def test_mrt_total_power_unit_norm():
    rng = np.random.default_rng(1)
    h = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    W = calibrated_precoder(h, kind="mrt", power_mode="total")
    np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0)


def test_zf_nulls_cross_users():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    W = calibrated_precoder(h, kind="zf", power_mode="total")
    rx = h.T @ W
    off = rx - np.diag(np.diag(rx))
    # zero-forcing leaves only the diagonal (up to per-user scaling)
    assert np.max(np.abs(off)) < 1e-10 * np.max(np.abs(np.diag(rx)))


def test_precoder_input_validation():
    h = np.ones((3, 2), complex)
    with pytest.raises(MetricsError):
        calibrated_precoder(h, kind="nope")
    with pytest.raises(MetricsError):
        calibrated_precoder(h, power_mode="nope")


def test_spectral_efficiency_hand_oracle():
    # one port, one user, |h|=2, unit precoder, tx=1, noise=1 -> log2(5)
    h = np.array([[2.0 + 0j]])
    W = np.array([[1.0 + 0j]])
    assert spectral_efficiency(h, W, noise_power=1.0) == pytest.approx(
        np.log2(5.0), rel=1e-12)


def test_spectral_efficiency_with_interference():
    # 2 users, orthogonal channels, MRT: no cross interference
    h = np.array([[1.0 + 0j, 0.0], [0.0, 1.0 + 0j]])
    W = calibrated_precoder(h, kind="mrt", power_mode="total")
    se = spectral_efficiency(h, W, noise_power=1.0)
    assert se == pytest.approx(1.0, rel=1e-12)   # log2(2) per user
    # same-direction users: MRT streams interfere fully
    h2 = np.array([[1.0 + 0j, 1.0 + 0j]])
    W2 = calibrated_precoder(h2, kind="mrt", power_mode="total")
    se2 = spectral_efficiency(h2, W2, noise_power=1.0)
    assert se2 == pytest.approx(np.log2(1.0 + 1.0 / 2.0), rel=1e-12)


def test_spectral_efficiency_shape_check():
    with pytest.raises(MetricsError):
        spectral_efficiency(np.ones((2, 2)), np.ones((3, 2)), 1.0)


def test_beamforming_gain_coherent_doubling():
    # equal-magnitude ports, phase-only MRT: gain = M^2 per unit-amplitude port
    for M in (1, 2, 4, 8):
        h = np.exp(1j * np.linspace(0.0, 2.0, M))[:, None]
        W = calibrated_precoder(h, kind="mrt", power_mode="per_port")
        g = beamforming_gain_db(h, W)
        assert g == pytest.approx(20.0 * np.log10(M), abs=1e-9)


def test_phase_error_removes_common_rotation():
    rng = np.random.default_rng(3)
    true = np.exp(1j * rng.uniform(-np.pi, np.pi, 16))
    err = phase_error_deg(true * np.exp(0.9j), true)
    np.testing.assert_allclose(err, 0.0, atol=1e-9)


def test_phase_rmse_known_pattern():
    true = np.ones(4, complex)
    hat = np.exp(1j * np.radians([10.0, -10.0, 10.0, -10.0]))
    # pattern is zero-mean, so common-phase removal changes nothing
    assert phase_rmse_deg(hat, true) == pytest.approx(10.0, abs=1e-9)


def test_phase_rmse_uniform_phase():
    # uniform wrapped phase has RMS 180/sqrt(3) ~ 103.9 degrees
    rng = np.random.default_rng(4)
    hat = np.exp(1j * rng.uniform(-np.pi, np.pi, 200_000))
    true = np.ones_like(hat)
    assert phase_rmse_deg(hat, true) == pytest.approx(180.0 / np.sqrt(3.0), abs=1.0)


def test_empirical_cdf_and_percentile():
    s = empirical_cdf(np.array([3.0, 1.0, 2.0, 4.0]))
    np.testing.assert_array_equal(s.x, [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(s.y, [0.25, 0.5, 0.75, 1.0])
    assert percentile(s, 0.5) == 2.0
    assert percentile(s, 0.9) == 4.0
    assert percentile(s, 0.0) == 1.0
    with pytest.raises(MetricsError):
        percentile(s, 1.5)
    with pytest.raises(MetricsError):
        empirical_cdf(np.array([]))


def test_metric_series_validation():
    with pytest.raises(MetricsError):
        MetricSeries("bad", np.arange(3), np.arange(4))

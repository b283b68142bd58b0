import csv

import numpy as np
import pytest

from simcal import calibration
from simcal.calibration import (
    EstimationError, argos, argos_mean, decompose_link_offsets, ml_delay_coeff,
    tls_classic, tls_joint, two_step_ml_tls,
)
from simcal.config import NodeImpairment
from simcal.pilots import form_equivalent_channel

DF = 120.0e3


def synth_bidirectional(rng, M, N, K=1, amp=True):
    """Reciprocal G/H pair with known node coefficients (no noise)."""
    shape = (M, N) if K == 1 else (M, N, K)
    Hbar = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    mag = lambda n: (1 + 0.1 * rng.standard_normal(n)) if amp else np.ones(n)
    b_tx = mag(M) * np.exp(1j * rng.uniform(-np.pi, np.pi, M))
    b_rx = mag(M) * np.exp(1j * rng.uniform(-np.pi, np.pi, M))
    u_tx = mag(N) * np.exp(1j * rng.uniform(-np.pi, np.pi, N))
    u_rx = mag(N) * np.exp(1j * rng.uniform(-np.pi, np.pi, N))
    bshape = (-1,) + (1,) * (len(shape) - 1)
    G = b_rx.reshape(bshape) * u_tx.reshape((1, -1) + (1,) * (K > 1)) * Hbar
    H = np.swapaxes(u_rx.reshape((1, -1) + (1,) * (K > 1)) *
                    b_tx.reshape(bshape) * Hbar, 0, 1)
    c_bs = b_tx / b_rx
    c_ue = u_tx / u_rx
    return G, H, c_bs, c_ue


def test_argos_hand_oracle():
    G = np.array([[2.0 + 0j], [1j]])
    H = np.array([[1.0 + 0j, 2.0]])
    C, invalid = argos(G, H)
    np.testing.assert_allclose(C, [[2.0], [0.5j]])
    assert not invalid.any()


def test_argos_zero_denominator():
    G = np.ones((2, 1), dtype=complex)
    H = np.array([[1.0, 0.0]], dtype=complex)
    C, invalid = argos(G, H)
    assert invalid[1, 0]
    assert np.isnan(C[1, 0])


def test_argos_recovers_coefficient_ratio():
    rng = np.random.default_rng(0)
    G, H, c_bs, c_ue = synth_bidirectional(rng, 4, 3)
    C, _ = argos(G, H)
    expect = c_ue[None, :] / c_bs[:, None]
    np.testing.assert_allclose(C, expect, rtol=1e-12)


def test_tls_classic_noiseless_exact():
    rng = np.random.default_rng(1)
    G, H, c_bs, c_ue = synth_bidirectional(rng, 5, 3)
    cal = tls_classic(G, H)
    np.testing.assert_allclose(cal.c_bs, c_bs / c_bs[-1], rtol=1e-9)
    np.testing.assert_allclose(cal.c_ue, c_ue / c_bs[-1], rtol=1e-9)
    assert cal.c_bs[-1] == pytest.approx(1.0)


def test_tls_and_argos_agree_up_to_gauge():
    rng = np.random.default_rng(2)
    G, H, _, _ = synth_bidirectional(rng, 4, 4)
    cal = tls_classic(G, H)
    C, _ = argos(G, H)
    # compare full link coefficients, which are gauge-free
    link_tls = cal.c_ue[None, :] / cal.c_bs[:, None]
    np.testing.assert_allclose(link_tls, C, rtol=1e-7)


def test_gauge_invariance():
    # a global complex scale on all UL (or DL) observations must not move
    # the link coefficients
    rng = np.random.default_rng(3)
    G, H, _, _ = synth_bidirectional(rng, 3, 3)
    base = tls_classic(G, H).c_link
    scaled = tls_classic(G * (2.0 - 1.5j), H).c_link / (2.0 - 1.5j)
    np.testing.assert_allclose(scaled, base, rtol=1e-9)


def test_tls_classic_per_subcarrier():
    rng = np.random.default_rng(4)
    G, H, c_bs, c_ue = synth_bidirectional(rng, 3, 2, K=5)
    cal = tls_classic(G, H)
    assert cal.per_subcarrier.shape == (3, 2, 5)
    expect = c_ue[None, :, None] / c_bs[:, None, None]
    np.testing.assert_allclose(cal.per_subcarrier, np.broadcast_to(expect, (3, 2, 5)),
                               rtol=1e-8)


def test_ml_delay_on_grid_point_exact():
    k = np.arange(64) * 8.0
    tau0 = 2.0e-9    # commensurate with the default search grid
    g = 1.7 * np.exp(0.3j) * np.exp(-4j * np.pi * k * DF * tau0)
    tau, c = ml_delay_coeff(g, k, DF, (-1e-8, 1e-8))
    assert tau == pytest.approx(tau0, abs=1e-14)
    assert c == pytest.approx(1.7 * np.exp(0.3j), rel=1e-6)


def test_ml_delay_off_grid():
    k = np.arange(64) * 8.0
    tau0 = 3.137e-9
    g = np.exp(-4j * np.pi * k * DF * tau0) * np.exp(-0.8j)
    tau, c = ml_delay_coeff(g, k, DF, (-1e-8, 1e-8))
    assert tau == pytest.approx(tau0, abs=1e-13)
    assert np.angle(c) == pytest.approx(-0.8, abs=1e-6)


def test_ml_delay_one_way_basis():
    k = np.arange(32) * 4.0
    tau0 = -5.4e-9
    g = np.exp(-2j * np.pi * k * DF * tau0)
    tau, _ = ml_delay_coeff(g, k, DF, (-1e-8, 1e-8), doubled=False)
    assert tau == pytest.approx(tau0, abs=1e-13)


def test_ml_delay_doubled_vs_one_way_factor_two():
    # the same samples interpreted as a round trip yield half the delay
    k = np.arange(32) * 4.0
    tau0 = 6.0e-9
    g = np.exp(-2j * np.pi * k * DF * tau0)
    tau_rt, _ = ml_delay_coeff(g, k, DF, (-1e-8, 1e-8), doubled=False)
    tau_ow, _ = ml_delay_coeff(g, k, DF, (-1e-8, 1e-8), doubled=True)
    assert tau_rt == pytest.approx(2.0 * tau_ow, rel=1e-10)


def test_ml_delay_input_checks():
    k = np.arange(4.0)
    with pytest.raises(EstimationError):
        ml_delay_coeff(np.zeros(4), k, DF, (-1e-8, 1e-8))
    with pytest.raises(EstimationError):
        ml_delay_coeff(np.ones(1), k[:1], DF, (-1e-8, 1e-8))


def test_tls_joint_exact_with_nonfactorable_amplitudes():
    # per-link positive amplitude errors must not disturb the phases
    rng = np.random.default_rng(5)
    M, N = 6, 4
    c_bs = np.exp(1j * rng.uniform(-np.pi, np.pi, M))
    c_ue = np.exp(1j * rng.uniform(-np.pi, np.pi, N))
    rho = rng.uniform(0.5, 2.0, (M, N))            # not rank-one
    c_hat = rho * (c_ue[None, :] / c_bs[:, None])
    cal = tls_joint(c_hat)
    err = np.angle(cal.c_link * np.conj(c_ue[None, :] / c_bs[:, None]))
    np.testing.assert_allclose(err, 0.0, atol=1e-9)


def test_tls_joint_tiny_amplitude_scale():
    # echoes carry path loss; a uniform 1e-5 scale must not hurt accuracy
    rng = np.random.default_rng(6)
    c_bs = np.exp(1j * rng.uniform(-np.pi, np.pi, 5))
    c_ue = np.exp(1j * rng.uniform(-np.pi, np.pi, 3))
    c_hat = 1e-5 * (c_ue[None, :] / c_bs[:, None])
    cal = tls_joint(c_hat)
    err = np.angle(cal.c_link * np.conj(c_ue[None, :] / c_bs[:, None]))
    np.testing.assert_allclose(err, 0.0, atol=1e-9)


def test_decompose_link_offsets_identity():
    # x[m, n] = x_ue[n] - x_bs[m] is reproduced exactly from the split parts
    rng = np.random.default_rng(7)
    for _ in range(20):
        x_bs = rng.uniform(-1e-8, 1e-8, 5)
        x_ue = rng.uniform(-1e-8, 1e-8, 3)
        x = x_ue[None, :] - x_bs[:, None]
        b, u = decompose_link_offsets(x)
        np.testing.assert_allclose(u[None, :] - b[:, None], x, atol=1e-22)
        assert b[-1] == pytest.approx(0.0, abs=1e-22)    # additive gauge


def test_two_step_ml_tls_end_to_end():
    rng = np.random.default_rng(8)
    M, N = 4, 2
    fc, T = 26.0e9, 6.25e-4
    imps_bs = [NodeImpairment((1 + 0.05 * rng.standard_normal()) * np.exp(1j * rng.uniform(-np.pi, np.pi)),
                              (1 + 0.05 * rng.standard_normal()) * np.exp(1j * rng.uniform(-np.pi, np.pi)),
                              rng.uniform(-1e-8, 1e-8), 0.0) for _ in range(M)]
    imps_ue = [NodeImpairment((1 + 0.05 * rng.standard_normal()) * np.exp(1j * rng.uniform(-np.pi, np.pi)),
                              (1 + 0.05 * rng.standard_normal()) * np.exp(1j * rng.uniform(-np.pi, np.pi)),
                              rng.uniform(-1e-8, 1e-8), 0.0) for _ in range(N)]
    k = np.arange(32) * 4.0
    eqs = {}
    for m in range(M):
        for n in range(N):
            C = calibration.ideal_link_coeff(imps_bs[m], imps_ue[n], k, DF, fc, T)
            eqs[(m, n)] = form_equivalent_channel(C, k, 0.0)
    cal = two_step_ml_tls(eqs, M, N, DF, (-2.1e-8, 2.1e-8))
    for m in range(M):
        for n in range(N):
            tau_true = imps_ue[n].tau_s - imps_bs[m].tau_s
            assert cal.tau_hat[m, n] == pytest.approx(tau_true, abs=1e-13)
            c_hat = cal.link_coeff(m, n, k, DF)
            c_true = calibration.ideal_link_coeff(imps_bs[m], imps_ue[n], k, DF, fc, T)
            np.testing.assert_allclose(np.angle(c_hat * np.conj(c_true)), 0.0,
                                       atol=1e-7)
    # per-node decomposition consistent with the link offsets
    np.testing.assert_allclose(cal.tau_ue[None, :] - cal.tau_bs[:, None],
                               cal.tau_hat, atol=1e-13)


def test_ideal_link_coeff_matches_channel_ratio():
    from simcal import channel
    from simcal.channel import ChannelMeta, LinkPathSet
    meta = ChannelMeta(df=DF, T=6.25e-4, fc=26.0e9,
                       k_indices=np.arange(16.0), l_indices=np.arange(3.0))
    ota = channel.generate_ota(LinkPathSet([0.7 + 0.2j], [40.0], [0.0]), meta)
    trp = NodeImpairment(1.2 * np.exp(0.5j), 0.8 * np.exp(-0.2j), 3e-9, 1e-8)
    ue = NodeImpairment(0.9 * np.exp(-1.1j), 1.1 * np.exp(0.9j), -4e-9, -2e-8)
    G = channel.apply_impairments(ota, ue, trp, "UL").values
    H = channel.apply_impairments(ota, trp, ue, "DL").values
    for l in range(3):
        expect = calibration.ideal_link_coeff(trp, ue, meta.k_indices, DF,
                                              26.0e9, 6.25e-4, l=float(l))
        np.testing.assert_allclose(G[:, l] / H[:, l], expect, rtol=1e-10)


def test_calibration_set_csv(tmp_path):
    cal = tls_joint(np.array([[1.0 + 0j, 2j], [0.5, 1.0 + 1j]]))
    cal.tau_hat = np.array([[1e-9, -2e-9], [3e-9, 0.0]])
    path = tmp_path / "cal.csv"
    cal.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "n", "tau_hat_s", "c_re", "c_im"]
    assert len(rows) == 5
    m, n = int(rows[1][0]), int(rows[1][1])
    assert complex(float(rows[1][3]), float(rows[1][4])) == cal.c_link[m, n]


def test_link_coeff_requires_calibration():
    cal = calibration.CalibrationSet()
    with pytest.raises(EstimationError):
        cal.link_coeff(0, 0, np.arange(4), DF)
    with pytest.raises(EstimationError):
        cal.bs_port_coeff(np.arange(4), DF)

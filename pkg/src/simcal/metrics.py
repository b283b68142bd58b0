"""Downlink beamforming metrics and error statistics.

Spectral efficiency is evaluated for multi-port maximum-ratio or zero-forcing
transmission toward one or more users, with the precoder built from the
calibrated uplink estimates and the realized channel taken as the true
downlink.  Calibration quality shows up directly as coherence loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class MetricSeries:
    """A named 1-D metric with an x-axis, ready for CSV dumping."""
    name: str
    x: np.ndarray
    y: np.ndarray
    x_label: str = "x"
    y_label: str = "y"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise MetricsError(f"{self.name}: x/y length mismatch")


def calibrated_precoder(h_dl_hat: np.ndarray, kind: str = "mrt",
                        power_mode: str = "per_port") -> np.ndarray:
    """Precoding vectors from the estimated downlink channel.

    h_dl_hat : (M, U) or (M, U, K) estimated DL channel, port x user [x subcarrier].
    kind     : "mrt" (conjugate) or "zf" (pseudo-inverse columns).
    power_mode : "per_port" constrains each port to unit amplitude (phase-only
        precoding, the regime where coherent gain doubles with port count);
        "total" normalizes each user's vector to unit total power.

    Returns W with the same shape, columns being per-user precoders.
    """
    h = np.asarray(h_dl_hat, dtype=complex)
    squeeze = h.ndim == 2
    if squeeze:
        h = h[:, :, None]
    M, U, K = h.shape
    W = np.empty_like(h)
    for k in range(K):
        Hk = h[:, :, k]
        if kind == "mrt":
            Wk = np.conj(Hk)
        elif kind == "zf":
            # columns of pinv(H^T) steer to each user with nulls on the others
            Wk = np.linalg.pinv(Hk.T)
        else:
            raise MetricsError(f"unknown precoder kind {kind!r}")
        if power_mode == "per_port":
            mag = np.abs(Wk)
            Wk = np.where(mag > 1e-15, Wk / np.maximum(mag, 1e-300), 0.0)
        elif power_mode == "total":
            norms = np.linalg.norm(Wk, axis=0)
            Wk = Wk / np.maximum(norms[None, :], 1e-300)
        else:
            raise MetricsError(f"unknown power_mode {power_mode!r}")
        W[:, :, k] = Wk
    return W[:, :, 0] if squeeze else W


def spectral_efficiency(h_dl_true: np.ndarray, W: np.ndarray,
                        noise_power: float, tx_power: float = 1.0) -> float:
    """Mean log2(1 + SINR) over users and subcarriers.

    h_dl_true : (M, U) or (M, U, K) realized DL channel.
    W         : matching precoder array from :func:`calibrated_precoder`.
    """
    h = np.asarray(h_dl_true, dtype=complex)
    w = np.asarray(W, dtype=complex)
    if h.shape != w.shape:
        raise MetricsError("channel/precoder shape mismatch")
    if h.ndim == 2:
        h = h[:, :, None]
        w = w[:, :, None]
    M, U, K = h.shape
    se = 0.0
    for k in range(K):
        Hk, Wk = h[:, :, k], w[:, :, k]
        # rx[u, j] = signal at user u from the stream aimed at user j
        rx = Hk.T @ Wk * np.sqrt(tx_power)
        sig = np.abs(np.diag(rx)) ** 2
        interf = np.sum(np.abs(rx) ** 2, axis=1) - sig
        sinr = sig / (interf + noise_power)
        se += float(np.mean(np.log2(1.0 + sinr)))
    return se / K


def beamforming_gain_db(h_dl_true: np.ndarray, W: np.ndarray) -> float:
    """Coherent combining gain |h^T w|^2 in dB, averaged over users/subcarriers."""
    h = np.asarray(h_dl_true, dtype=complex)
    w = np.asarray(W, dtype=complex)
    if h.ndim == 2:
        h = h[:, :, None]
        w = w[:, :, None]
    M, U, K = h.shape
    g = np.empty((U, K))
    for k in range(K):
        rx = h[:, :, k].T @ w[:, :, k]
        g[:, k] = np.abs(np.diag(rx)) ** 2
    return float(10.0 * np.log10(np.mean(g)))


def phase_error_deg(c_hat: np.ndarray, c_true: np.ndarray) -> np.ndarray:
    """Element-wise wrapped phase error in degrees, common-phase removed.

    A global phase on c_hat is unobservable to reciprocity-based precoding,
    so the circular-mean offset is subtracted before wrapping.
    """
    a = np.asarray(c_hat, dtype=complex).ravel()
    b = np.asarray(c_true, dtype=complex).ravel()
    if a.shape != b.shape:
        raise MetricsError("estimate/truth shape mismatch")
    rot = a * np.conj(b)
    common = np.angle(np.sum(rot / np.maximum(np.abs(rot), 1e-300)))
    err = np.angle(rot * np.exp(-1j * common))
    return np.degrees(err)


def phase_rmse_deg(c_hat: np.ndarray, c_true: np.ndarray) -> float:
    err = phase_error_deg(c_hat, c_true)
    return float(np.sqrt(np.mean(err ** 2)))


def empirical_cdf(samples: np.ndarray) -> MetricSeries:
    """Step CDF of a sample set (x sorted, y = rank / n)."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise MetricsError("empty sample set")
    y = np.arange(1, s.size + 1) / s.size
    return MetricSeries("cdf", s, y, x_label="value", y_label="P(X <= x)")


def percentile(series: MetricSeries, q: float) -> float:
    """Inverse of an empirical CDF at probability q (0..1)."""
    if not 0.0 <= q <= 1.0:
        raise MetricsError("q must be in [0, 1]")
    idx = np.searchsorted(series.y, q, side="left")
    idx = min(idx, len(series.x) - 1)
    return float(series.x[idx])

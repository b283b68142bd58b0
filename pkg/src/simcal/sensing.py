"""Calibration-assisted sensing: impairment-free channel recovery, 2D-FFT
range-Doppler maps, CFAR detection, MTI clutter suppression, STFT drift
tracks, channel prediction from sensed paths, CRLB evaluation, and
multi-TRP range localization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .channel import ChannelMeta, ChannelTensor, C_LIGHT


class SensingError(RuntimeError):
    pass


class CalibrationRequiredError(SensingError):
    """Raised when recovery is attempted without estimated offsets."""


@dataclass
class SensedPath:
    alpha_hat: complex
    d_hat_m: float
    v_hat_mps: float
    power_db: float


@dataclass
class RangeDopplerMap:
    power_db: np.ndarray          # (K, L), Doppler axis fft-shifted
    range_axis_m: np.ndarray      # (K,)
    velocity_axis_mps: np.ndarray  # (L,), centered on zero
    zero_doppler_index: int
    spectrum: np.ndarray | None = None   # complex map (for amplitude pickup)


@dataclass
class CrlbReport:
    d_crlb_m2: float
    v_crlb: float
    theta_d: float
    theta_v: float
    theta_total: float
    rho: float
    K: int
    L: int


def unambiguous_velocity(fc: float, T_pilot: float) -> float:
    """Maximum unambiguous velocity magnitude c / (2 fc T_pilot)."""
    return C_LIGHT / (2.0 * fc * T_pilot)


def unambiguous_range(df_comb: float) -> float:
    return C_LIGHT / df_comb


def recover_ota(G: ChannelTensor, ratio: complex, tau_hat: float, e_hat: float
                ) -> ChannelTensor:
    """Strip estimated impairments from an observed UL channel.

    sqrt(C*) is reconstructed parametrically from (ratio, tau_hat, e_hat) --
    never by pointwise complex square root, which would be branch-ambiguous --
    as sqrt(conj(ratio)) * exp(+j 2 pi k df tau) * exp(-j 2 pi e fc l T).
    """
    for name, val in (("tau_hat", tau_hat), ("e_hat", e_hat)):
        if val is None or not np.isfinite(val):
            raise CalibrationRequiredError(
                f"{name} unavailable; run calibration before sensing recovery")
    meta = G.meta
    k = meta.k_indices[:, None]
    l = meta.l_indices[None, :]
    sqrt_c_conj = np.sqrt(np.conj(complex(ratio))) \
        * np.exp(2j * np.pi * k * meta.df * tau_hat) \
        * np.exp(-2j * np.pi * e_hat * meta.fc * l * meta.T)
    return ChannelTensor(G.values * sqrt_c_conj, "OTA", meta)


def _window2d(shape, kind):
    if kind is None or kind == "rect":
        return np.ones(shape)
    if kind == "hann":
        wk = np.hanning(shape[0]) if shape[0] > 1 else np.ones(1)
        wl = np.hanning(shape[1]) if shape[1] > 1 else np.ones(1)
        return np.outer(wk, wl)
    raise ValueError(f"unknown window {kind!r}")


def range_doppler(H: ChannelTensor, window: str | None = None) -> RangeDopplerMap:
    """2D-FFT range-Doppler map of a (recovered) OTA channel.

    Range transform matches the exp(-j 2 pi k df d / c) delay convention
    (IFFT across k); Doppler is an FFT across l, shifted so zero Doppler sits
    at the center bin.  Axes: range bin r -> r c / (K df_comb), velocity bin
    p -> p c / (fc L T).
    """
    vals = H.values
    K, L = vals.shape
    if K < 2 or L < 2:
        raise SensingError("need at least 2 subcarriers and 2 symbols")
    meta = H.meta
    kstep = meta.k_indices[1] - meta.k_indices[0] if K > 1 else 1.0
    df_comb = kstep * meta.df
    w = _window2d(vals.shape, window)
    spec = np.fft.fft(np.fft.ifft(vals * w, axis=0) * K, axis=1) / (K * L)
    spec = np.fft.fftshift(spec, axes=1)
    power = np.abs(spec) ** 2
    with np.errstate(divide="ignore"):
        power_db = 10.0 * np.log10(power)
    range_axis = np.arange(K) * C_LIGHT / (K * df_comb)
    dopp_bins = np.arange(L) - L // 2
    vel_axis = dopp_bins * C_LIGHT / (meta.fc * L * meta.T)
    return RangeDopplerMap(power_db=power_db, range_axis_m=range_axis,
                           velocity_axis_mps=vel_axis, zero_doppler_index=L // 2,
                           spectrum=spec)


def _parabolic_offset(ym, y0, yp) -> float:
    denom = ym - 2.0 * y0 + yp
    if denom >= -1e-300:
        return 0.0
    off = 0.5 * (ym - yp) / denom
    return float(np.clip(off, -0.5, 0.5))


def cfar_detect(rdmap: RangeDopplerMap, pfa: float = 1e-3, guard: int = 2,
                train: int = 8) -> list[SensedPath]:
    """2D cell-averaging CFAR with a square training annulus.

    Threshold factor alpha = N_train (pfa^(-1/N_train) - 1); detections are
    local maxima above threshold, each refined by quadratic interpolation on
    the log-power surface along both axes.
    """
    power = 10.0 ** (rdmap.power_db / 10.0)
    K, L = power.shape
    w_out = 2 * (guard + train) + 1
    w_in = 2 * guard + 1
    n_train = w_out * w_out - w_in * w_in
    if n_train <= 0:
        raise SensingError("training window is empty after guards")
    if not 0.0 < pfa < 1.0:
        raise SensingError("pfa must be in (0, 1)")
    # circular topology in both axes matches the FFT periodicity
    sum_out = ndimage.uniform_filter(power, size=w_out, mode="wrap") * w_out ** 2
    sum_in = ndimage.uniform_filter(power, size=w_in, mode="wrap") * w_in ** 2
    local_mean = (sum_out - sum_in) / n_train
    alpha = n_train * (pfa ** (-1.0 / n_train) - 1.0)
    thresh = alpha * local_mean
    is_max = power >= ndimage.maximum_filter(power, size=3, mode="wrap")
    hits = np.argwhere((power > thresh) & is_max & (power > 0))

    dr = rdmap.range_axis_m[1] - rdmap.range_axis_m[0]
    dv = rdmap.velocity_axis_mps[1] - rdmap.velocity_axis_mps[0]
    out = []
    for r, p in hits:
        logp = rdmap.power_db
        off_r = _parabolic_offset(logp[(r - 1) % K, p], logp[r, p], logp[(r + 1) % K, p])
        off_v = _parabolic_offset(logp[r, (p - 1) % L], logp[r, p], logp[r, (p + 1) % L])
        amp = rdmap.spectrum[r, p] if rdmap.spectrum is not None else np.sqrt(power[r, p])
        out.append(SensedPath(
            alpha_hat=complex(amp),
            d_hat_m=float(rdmap.range_axis_m[r] + off_r * dr),
            v_hat_mps=float(rdmap.velocity_axis_mps[p] + off_v * dv),
            power_db=float(rdmap.power_db[r, p]),
        ))
    out.sort(key=lambda s: -s.power_db)
    return out


def refine_velocity(H: ChannelTensor, path: SensedPath) -> SensedPath:
    """Pulse-pair refinement of a detection's velocity.

    Isolates the detected range bin (IFFT across k), then reads the mean
    slow-time phase step of that bin's sequence.  Much finer than one Doppler
    bin at high SNR; assumes one dominant return in the bin.
    """
    meta = H.meta
    K = meta.K
    kstep = meta.k_indices[1] - meta.k_indices[0]
    df_comb = kstep * meta.df
    rng_profile = np.fft.ifft(H.values, axis=0)
    r_bin = int(np.round(path.d_hat_m * K * df_comb / C_LIGHT)) % K
    seq = rng_profile[r_bin, :]
    acc = np.sum(seq[1:] * np.conj(seq[:-1]))
    if np.abs(acc) < 1e-300:
        return path
    f_d = np.angle(acc) / (2.0 * np.pi * meta.T)
    v = f_d * C_LIGHT / meta.fc
    return SensedPath(alpha_hat=path.alpha_hat, d_hat_m=path.d_hat_m,
                      v_hat_mps=float(v), power_db=path.power_db)


def mti_filter(H: ChannelTensor, mode: str = "mean") -> ChannelTensor:
    """Zero-Doppler clutter suppression.

    Default subtracts the per-subcarrier slow-time mean; ``two_pulse`` applies
    the classic first-difference canceller instead (L shrinks by one).
    """
    if H.meta.L < 2:
        raise SensingError("MTI needs at least 2 slow-time samples")
    if mode == "mean":
        vals = H.values - H.values.mean(axis=1, keepdims=True)
        return ChannelTensor(vals, H.direction, H.meta)
    if mode == "two_pulse":
        vals = H.values[:, 1:] - H.values[:, :-1]
        meta = ChannelMeta(df=H.meta.df, T=H.meta.T, fc=H.meta.fc,
                           k_indices=H.meta.k_indices,
                           l_indices=H.meta.l_indices[1:])
        return ChannelTensor(vals, H.direction, meta)
    raise ValueError(f"unknown MTI mode {mode!r}")


def stft_offset(h_row: np.ndarray, window_len: int, hop: int, T: float
                ) -> tuple[np.ndarray, np.ndarray]:
    """Dominant-frequency track of a single-subcarrier slow-time sequence.

    Returns (window start times, dominant frequency per window in Hz);
    visualizes oscillator drift e*fc on uncalibrated channels.
    """
    h = np.asarray(h_row, dtype=complex)
    L = len(h)
    if window_len > L:
        raise SensingError(f"window_len {window_len} exceeds sequence length {L}")
    starts = np.arange(0, L - window_len + 1, hop)
    w = np.hanning(window_len) if window_len > 1 else np.ones(1)
    fs = 1.0 / T
    dfreq = fs / window_len
    track = np.empty(len(starts))
    for i, s in enumerate(starts):
        spec = np.fft.fft(h[s:s + window_len] * w)
        mag = np.abs(spec)
        j = int(np.argmax(mag))
        # circular neighbors: a tone near Nyquist still interpolates cleanly
        jm, jp = (j - 1) % window_len, (j + 1) % window_len
        off = 0.0
        if mag[j] > 0:
            lm = np.log(np.maximum(mag[[jm, j, jp]], 1e-300))
            off = _parabolic_offset(lm[0], lm[1], lm[2])
        f = (j + off) * dfreq
        track[i] = (f + fs / 2.0) % fs - fs / 2.0   # wrap to [-fs/2, fs/2)
    return starts * T, track


def predict_channel(paths: list[SensedPath], meta: ChannelMeta) -> ChannelTensor:
    """Reconstruct the OTA channel from sensed path estimates (same formula as
    generation, evaluated at the requested grid)."""
    if not paths:
        raise SensingError("cannot predict a channel from an empty path list")
    k = meta.k_indices[:, None]
    l = meta.l_indices[None, :]
    vals = np.zeros((meta.K, meta.L), dtype=complex)
    for p in paths:
        vals += p.alpha_hat * np.exp(-2j * np.pi * k * meta.df * p.d_hat_m / C_LIGHT) \
                            * np.exp(2j * np.pi * (p.v_hat_mps / C_LIGHT) * meta.fc * l * meta.T)
    return ChannelTensor(vals, "OTA", meta)


def crlb(rho: float, K: int, L: int, df: float, T: float, fc: float) -> CrlbReport:
    """Single-path delay/Doppler Cramer-Rao bounds and the induced worst-case
    phase error variances (evaluated literally)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if K < 2 or L < 2:
        raise ValueError("K and L must be >= 2")
    lam = C_LIGHT / fc
    d_crlb = 3.0 / (2.0 * rho * np.pi ** 2 * (df / C_LIGHT) ** 2 * K * (K ** 2 - 1) * L)
    v_crlb = 3.0 / (2.0 * rho * np.pi ** 2 * (T / lam) ** 2 * L * (L ** 2 - 1) * K)
    theta_d = 6.0 * K ** 2 / (rho * K * L * (K ** 2 - 1))
    theta_v = 6.0 * L ** 2 / (rho * K * L * (L ** 2 - 1))
    return CrlbReport(d_crlb_m2=float(d_crlb), v_crlb=float(v_crlb),
                      theta_d=float(theta_d), theta_v=float(theta_v),
                      theta_total=float(theta_d + theta_v),
                      rho=float(rho), K=K, L=L)


def localize(ranges_m: np.ndarray, trp_positions: np.ndarray,
             max_iter: int = 50, tol: float = 1e-9, estimate_bias: bool = False):
    """Gauss-Newton range-only position fix.

    Minimizes sum_m (||p - p_m|| + b - d_m)^2 starting from the TRP centroid,
    where the common range bias b is either fixed at zero or estimated
    jointly (for measurements sharing one unknown clock offset).  Returns
    (position, rms residual, converged flag).
    """
    d = np.asarray(ranges_m, dtype=float)
    P = np.asarray(trp_positions, dtype=float)
    Mn, dim = P.shape
    n_unknowns = dim + (1 if estimate_bias else 0)
    if Mn < n_unknowns + 1:
        raise SensingError(f"need at least {n_unknowns + 1} TRPs for this fix")
    if dim == 2:
        # non-collinearity check via the spread of perpendicular offsets
        rel = P - P.mean(axis=0)
        if np.linalg.matrix_rank(rel, tol=1e-9) < 2:
            raise SensingError("TRPs are collinear; 2-D fix is ambiguous")
    p = P.mean(axis=0)
    b = 0.0
    converged = False
    for _ in range(max_iter):
        diff = p[None, :] - P
        dists = np.linalg.norm(diff, axis=1)
        dists = np.maximum(dists, 1e-12)
        r = dists + b - d
        J = diff / dists[:, None]
        if estimate_bias:
            J = np.hstack([J, np.ones((Mn, 1))])
        try:
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        except np.linalg.LinAlgError:
            break
        p = p + step[:dim]
        if estimate_bias:
            b += step[dim]
        if np.linalg.norm(step) < tol:
            converged = True
            break
    diff = p[None, :] - P
    resid = float(np.sqrt(np.mean((np.linalg.norm(diff, axis=1) + b - d) ** 2)))
    return p, resid, converged

"""OTA channel generation from multipath geometry and per-node impairments.

Sign conventions (normative throughout the package):
  OTA:  Hbar(k, l) = sum_q alpha_q * exp(-j 2 pi k df d_q / c) * exp(+j 2 pi (v_q/c) fc l T)
  UL:   G = beta_rx^r beta_tx^t Hbar * exp(-j 2 pi k df tau_nm) * exp(+j 2 pi e_nm fc l T)
  DL:   H = beta_rx^r beta_tx^t Hbar * exp(+j 2 pi k df tau_nm) * exp(-j 2 pi e_nm fc l T)
with tau_nm = tau_ue - tau_trp and e_nm = e_ue - e_trp.  k is the absolute
subcarrier index, l the snapshot index in units of T.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import C_LIGHT, NodeImpairment, ScenarioConfig


@dataclass(frozen=True)
class ChannelMeta:
    """Grid the channel samples live on (absolute subcarrier / snapshot indices)."""

    df: float                 # base subcarrier spacing, Hz
    T: float                  # snapshot interval, s
    fc: float                 # carrier frequency, Hz
    k_indices: np.ndarray     # absolute subcarrier indices, shape (K,)
    l_indices: np.ndarray     # snapshot indices, shape (L,)

    @property
    def K(self) -> int:
        return len(self.k_indices)

    @property
    def L(self) -> int:
        return len(self.l_indices)


@dataclass
class LinkPathSet:
    """Multipath description of one (TRP m, UE n) link."""

    alphas: np.ndarray    # complex gains, shape (Q,)
    dists_m: np.ndarray   # path lengths, shape (Q,)
    vels_mps: np.ndarray  # radial velocities, shape (Q,)
    link: tuple = (0, 0)

    def __post_init__(self):
        self.alphas = np.atleast_1d(np.asarray(self.alphas, dtype=complex))
        self.dists_m = np.atleast_1d(np.asarray(self.dists_m, dtype=float))
        self.vels_mps = np.atleast_1d(np.asarray(self.vels_mps, dtype=float))
        if len(self.alphas) == 0:
            raise ValueError("path set must be non-empty (Q >= 1)")
        if np.any(self.dists_m < 0):
            raise ValueError("path distances must be non-negative")


@dataclass
class ChannelTensor:
    """Complex channel samples for one link on a (K, L) grid."""

    values: np.ndarray    # complex, shape (K, L)
    direction: str        # "OTA", "UL", or "DL"
    meta: ChannelMeta

    def copy(self) -> "ChannelTensor":
        return ChannelTensor(self.values.copy(), self.direction, self.meta)


def make_meta(cfg: ScenarioConfig, k_indices, l_indices) -> ChannelMeta:
    return ChannelMeta(
        df=cfg.subcarrier_spacing_hz,
        T=cfg.symbol_interval_s,
        fc=cfg.carrier_freq_hz,
        k_indices=np.asarray(k_indices, dtype=float),
        l_indices=np.asarray(l_indices, dtype=float),
    )


def paths_from_geometry(cfg: ScenarioConfig, m: int, n: int) -> LinkPathSet:
    """Build the LOS path (plus scatterer / injected paths) for link (m, n).

    The free-space amplitude lambda/(4 pi d) is applied to alpha here; absolute
    transmit power only enters through the noise level in add_noise.
    """
    p_trp = np.asarray(cfg.geometry.trp_positions_m[m], dtype=float)
    p_ue = np.asarray(cfg.geometry.ue_positions_m[n], dtype=float)
    v_ue = np.asarray(cfg.geometry.ue_velocities_mps[n], dtype=float)
    lam = cfg.wavelength_m
    gain = float(cfg.antennas_per_aau)

    d_los = float(np.linalg.norm(p_ue - p_trp))
    if d_los <= 0:
        raise ValueError(f"TRP {m} and UE {n} are co-located")
    u = (p_ue - p_trp) / d_los          # unit vector TRP -> UE
    v_los = float(np.dot(v_ue, u))      # range rate of the LOS path
    a_los = gain * lam / (4.0 * np.pi * d_los)

    alphas = [a_los]
    dists = [d_los]
    vels = [v_los]

    for s in cfg.geometry.scatterers:
        p_s = np.asarray(s["position_m"], dtype=float)
        v_s = np.asarray(s.get("velocity_mps", np.zeros_like(p_s)), dtype=float)
        d1 = float(np.linalg.norm(p_s - p_ue))
        d2 = float(np.linalg.norm(p_trp - p_s))
        if d1 <= 0 or d2 <= 0:
            raise ValueError("scatterer co-located with an endpoint")
        u1 = (p_s - p_ue) / d1
        u2 = (p_trp - p_s) / d2
        # range rate of the two-hop path: d/dt (|s-ue| + |trp-s|)
        rate = float(np.dot(v_ue - v_s, -u1) + np.dot(v_s, -u2))
        g = 10.0 ** (float(s.get("gain_db", -20.0)) / 20.0)
        alphas.append(g * gain * lam / (4.0 * np.pi * (d1 + d2)))
        dists.append(d1 + d2)
        vels.append(rate)

    for ep in cfg.geometry.extra_paths:
        lk = ep.get("link")
        if lk is not None and tuple(lk) != (m, n):
            continue
        g = 10.0 ** (float(ep.get("gain_db", -20.0)) / 20.0)
        alphas.append(g * a_los)
        dists.append(d_los + float(ep["delta_distance_m"]))
        vels.append(float(ep["velocity_mps"]))

    return LinkPathSet(np.array(alphas, dtype=complex), np.array(dists),
                       np.array(vels), link=(m, n))


def generate_ota(paths: LinkPathSet, meta: ChannelMeta) -> ChannelTensor:
    """Ideal OTA channel: per-path delay phase across k, Doppler phase across l."""
    k = meta.k_indices[:, None, None]           # (K, 1, 1)
    l = meta.l_indices[None, :, None]           # (1, L, 1)
    a = paths.alphas[None, None, :]
    d = paths.dists_m[None, None, :]
    v = paths.vels_mps[None, None, :]
    terms = a * np.exp(-2j * np.pi * k * meta.df * d / C_LIGHT) \
              * np.exp(2j * np.pi * (v / C_LIGHT) * meta.fc * l * meta.T)
    return ChannelTensor(terms.sum(axis=2), "OTA", meta)


def apply_impairments(ota: ChannelTensor, tx: NodeImpairment, rx: NodeImpairment,
                      direction: str) -> ChannelTensor:
    """Turn an OTA channel into the observed UL/DL channel of one link.

    For UL the transmitter is the UE and the receiver the TRP; for DL the
    roles swap.  tau_nm and e_nm are always UE minus TRP.
    """
    if ota.direction != "OTA":
        raise ValueError(f"expected an OTA tensor, got {ota.direction}")
    if direction not in ("UL", "DL"):
        raise ValueError(f"direction must be UL or DL, got {direction}")
    meta = ota.meta
    k = meta.k_indices[:, None]
    l = meta.l_indices[None, :]
    if direction == "UL":
        tau_nm = tx.tau_s - rx.tau_s
        e_nm = tx.e - rx.e
        sign = 1.0
    else:
        tau_nm = rx.tau_s - tx.tau_s
        e_nm = rx.e - tx.e
        sign = -1.0
    phase = np.exp(sign * (-2j) * np.pi * k * meta.df * tau_nm) \
          * np.exp(sign * 2j * np.pi * e_nm * meta.fc * l * meta.T)
    vals = rx.beta_r * tx.beta_t * ota.values * phase
    return ChannelTensor(vals, direction, meta)


def estimate_noise_std(cfg: ScenarioConfig, num_pilot_subcarriers: int) -> float:
    """Std dev of the complex noise on a per-subcarrier channel estimate.

    Total transmit power is split evenly over the occupied pilot subcarriers;
    the estimate noise variance is N0 * df / P_subcarrier (path loss already
    lives in the channel amplitudes).
    """
    if cfg.noiseless:
        return 0.0
    n_pow = cfg.noise_power_per_subcarrier_w
    if n_pow == 0.0:
        return 0.0
    p_sc = cfg.tx_power_w / max(1, num_pilot_subcarriers)
    return float(np.sqrt(n_pow / p_sc))


def add_noise(ch: ChannelTensor, cfg: ScenarioConfig, rng: np.random.Generator,
              num_pilot_subcarriers: int | None = None) -> ChannelTensor:
    """Add circularly-symmetric complex Gaussian noise to a channel observation."""
    n_sc = ch.meta.K if num_pilot_subcarriers is None else num_pilot_subcarriers
    sigma = estimate_noise_std(cfg, n_sc)
    if sigma == 0.0:
        return ch.copy()
    noise = (rng.standard_normal(ch.values.shape)
             + 1j * rng.standard_normal(ch.values.shape)) * (sigma / np.sqrt(2.0))
    return ChannelTensor(ch.values + noise, ch.direction, ch.meta)


def dump_channel_csv(path, tensors: dict) -> None:
    """Fixture dump: rows (m, n, k, l, re, im, direction) for {(m,n): ChannelTensor}."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "n", "k", "l", "re", "im", "direction"])
        for (m, n), ct in sorted(tensors.items()):
            for i, k in enumerate(ct.meta.k_indices):
                for j, l in enumerate(ct.meta.l_indices):
                    v = ct.values[i, j]
                    w.writerow([m, n, int(k), int(l),
                                repr(float(v.real)), repr(float(v.imag)),
                                ct.direction])

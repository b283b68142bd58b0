"""Scenario configuration: parsing, validation, and seeded impairment draws.

All quantities are stored in SI units internally (Hz, s, m, dimensionless
fractional frequency offset).  The config document uses the field units
documented in docs/schema.md (ns for timing offsets, ppb for frequency
offsets); conversion happens exactly once, at load time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0  # m/s, exact


class ConfigError(ValueError):
    """Raised on schema or consistency violations; message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class NodeImpairment:
    """Per-node RF gains and clock offsets (quasi-static over a run)."""

    beta_t: complex  # transmit RF complex gain
    beta_r: complex  # receive RF complex gain
    tau_s: float     # timing offset vs. network time, seconds
    e: float         # fractional frequency offset, dimensionless


@dataclass(frozen=True)
class PilotSchedule:
    """Symbol indices (in units of the snapshot interval T) for each pilot role."""

    srs: tuple = (0,)
    csi_rs: tuple = (0,)
    cars: tuple = (1,)
    tracking: tuple = ()


@dataclass(frozen=True)
class Geometry:
    trp_positions_m: tuple          # M x dim
    ue_positions_m: tuple           # N x dim
    ue_velocities_mps: tuple        # N x dim
    scatterers: tuple = ()          # dicts: position_m, velocity_mps, gain_db
    extra_paths: tuple = ()         # dicts: link [m, n], delta_distance_m, velocity_mps, gain_db


@dataclass(frozen=True)
class ScenarioConfig:
    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    num_subcarriers: int            # base pilot sequence length K
    num_symbols: int                # L, tracked snapshots
    symbol_interval_s: float        # T, interval between tracked snapshots
    fft_size: int
    num_trp: int
    num_ue: int
    num_calib_ue: int
    tx_power_dbm: float
    noise_psd_dbm_hz: float
    bandwidth_hz: float
    rf_amp_sigma: float
    rf_phase_bounds_rad: tuple
    tau_bounds_s: tuple
    e_bounds: tuple                 # dimensionless (ppb already converted)
    geometry: Geometry
    pilots: PilotSchedule
    seed: int = 0
    noiseless: bool = False
    cp_length: int = 0              # metadata only; no time-domain waveform
    antennas_per_aau: int = 1       # optional fixed beamforming amplitude gain

    @property
    def wavelength_m(self) -> float:
        return C_LIGHT / self.carrier_freq_hz

    @property
    def noise_power_per_subcarrier_w(self) -> float:
        if math.isinf(self.noise_psd_dbm_hz) and self.noise_psd_dbm_hz < 0:
            return 0.0
        return 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.subcarrier_spacing_hz

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)


def _req(obj: dict, path: str, key: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return obj[key]


def _pair(val, path: str) -> tuple:
    try:
        lo, hi = float(val[0]), float(val[1])
    except (TypeError, ValueError, IndexError):
        raise ConfigError(path, "expected a two-element numeric pair") from None
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(path, "bounds must be finite")
    if lo > hi:
        raise ConfigError(path, "lower bound exceeds upper bound")
    return (lo, hi)


def load_scenario(doc) -> ScenarioConfig:
    """Parse a config document (JSON text, path-free) into a frozen ScenarioConfig.

    Accepts a JSON string or an already-parsed object tree with top-level keys
    ``system``, ``impairments``, ``geometry``, ``pilots``, ``run``.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be an object")

    sys_ = _req(doc, "", "system")
    imp = _req(doc, "", "impairments")
    geo = _req(doc, "", "geometry")
    pil = doc.get("pilots", {})
    run = doc.get("run", {})

    fc = float(_req(sys_, "system", "carrier_freq_hz"))
    df = float(_req(sys_, "system", "subcarrier_spacing_hz"))
    K = int(_req(sys_, "system", "num_subcarriers"))
    L = int(_req(sys_, "system", "num_symbols"))
    T = float(_req(sys_, "system", "symbol_interval_s"))
    fft_size = int(sys_.get("fft_size", 2048))
    bw = float(sys_.get("bandwidth_hz", df * fft_size))
    tx_dbm = float(sys_.get("tx_power_dbm", 30.0))
    npsd = float(sys_.get("noise_psd_dbm_hz", -174.0))

    if K < 2:
        raise ConfigError("system.num_subcarriers", f"K must be >= 2, got {K}")
    if L < 2:
        raise ConfigError("system.num_symbols", f"L must be >= 2, got {L}")
    if K > fft_size:
        raise ConfigError("system.num_subcarriers", f"K={K} exceeds fft_size={fft_size}")
    if not math.isfinite(tx_dbm):
        raise ConfigError("system.tx_power_dbm", "must be finite")
    for name, val in (("carrier_freq_hz", fc), ("subcarrier_spacing_hz", df),
                      ("symbol_interval_s", T)):
        if not (math.isfinite(val) and val > 0):
            raise ConfigError(f"system.{name}", f"must be positive and finite, got {val}")

    amp_sigma = float(imp.get("rf_amp_sigma", 0.1))
    phase_bounds = _pair(imp.get("rf_phase_bounds_rad", (-math.pi, math.pi)),
                         "impairments.rf_phase_bounds_rad")
    tau_ns = _pair(imp.get("tau_bounds_ns", (-10.0, 10.0)), "impairments.tau_bounds_ns")
    e_ppb = _pair(imp.get("e_bounds_ppb", (-30.0, 30.0)), "impairments.e_bounds_ppb")
    # unit conversion happens here, exactly once
    tau_bounds = (tau_ns[0] * 1e-9, tau_ns[1] * 1e-9)
    e_bounds = (e_ppb[0] * 1e-9, e_ppb[1] * 1e-9)

    trp_pos = _req(geo, "geometry", "trp_positions_m")
    ue_pos = _req(geo, "geometry", "ue_positions_m")
    if len(trp_pos) < 1:
        raise ConfigError("geometry.trp_positions_m", "need at least one TRP (M >= 1)")
    if len(ue_pos) < 1:
        raise ConfigError("geometry.ue_positions_m", "need at least one UE (N >= 1)")
    dim = len(trp_pos[0])
    if dim not in (2, 3):
        raise ConfigError("geometry.trp_positions_m", "coordinates must be 2D or 3D")
    for i, p in enumerate(list(trp_pos) + list(ue_pos)):
        if len(p) != dim:
            raise ConfigError("geometry", f"node {i}: inconsistent coordinate dimension")
    ue_vel = geo.get("ue_velocities_mps", [[0.0] * dim for _ in ue_pos])
    if len(ue_vel) != len(ue_pos):
        raise ConfigError("geometry.ue_velocities_mps",
                          "must have one velocity vector per UE")
    geometry = Geometry(
        trp_positions_m=tuple(tuple(float(x) for x in p) for p in trp_pos),
        ue_positions_m=tuple(tuple(float(x) for x in p) for p in ue_pos),
        ue_velocities_mps=tuple(tuple(float(x) for x in v) for v in ue_vel),
        scatterers=tuple({k: (tuple(v) if isinstance(v, list) else v)
                          for k, v in s.items()} for s in geo.get("scatterers", [])),
        extra_paths=tuple({k: (tuple(v) if isinstance(v, list) else v)
                           for k, v in s.items()} for s in geo.get("extra_paths", [])),
    )

    M, N = len(trp_pos), len(ue_pos)
    n_cal = int(pil.get("num_calib_ue", N))
    if not (1 <= n_cal <= N):
        raise ConfigError("pilots.num_calib_ue", f"must be in [1, {N}], got {n_cal}")
    schedule = PilotSchedule(
        srs=tuple(pil.get("srs", (0,))),
        csi_rs=tuple(pil.get("csi_rs", (0,))),
        cars=tuple(pil.get("cars", (1,))),
        tracking=tuple(pil.get("tracking", ())),
    )

    return ScenarioConfig(
        carrier_freq_hz=fc,
        subcarrier_spacing_hz=df,
        num_subcarriers=K,
        num_symbols=L,
        symbol_interval_s=T,
        fft_size=fft_size,
        num_trp=M,
        num_ue=N,
        num_calib_ue=n_cal,
        tx_power_dbm=tx_dbm,
        noise_psd_dbm_hz=npsd,
        bandwidth_hz=bw,
        rf_amp_sigma=amp_sigma,
        rf_phase_bounds_rad=phase_bounds,
        tau_bounds_s=tau_bounds,
        e_bounds=e_bounds,
        geometry=geometry,
        pilots=schedule,
        seed=int(run.get("seed", 0)),
        noiseless=bool(run.get("noiseless", False)),
        cp_length=int(sys_.get("cp_length", 0)),
        antennas_per_aau=int(sys_.get("antennas_per_aau", 1)),
    )


def node_ids(cfg: ScenarioConfig) -> list:
    """Node ids in the documented draw order: TRPs ascending, then UEs ascending."""
    return [f"trp{m}" for m in range(cfg.num_trp)] + [f"ue{n}" for n in range(cfg.num_ue)]


def draw_impairments(cfg: ScenarioConfig, seed: int | None = None) -> dict:
    """Draw per-node impairments from the seeded stream.

    Draw order is part of the public contract so fixtures can be shared:
    nodes in ``node_ids`` order; per node the stream is consumed as
    amp_t, phase_t, amp_r, phase_r, tau, e.

    RF gain amplitude is 1 + N(0, rf_amp_sigma), clipped below at 0.1
    (a zero-mean amplitude would be nonphysical for precalibrated units).
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lo_p, hi_p = cfg.rf_phase_bounds_rad
    lo_t, hi_t = cfg.tau_bounds_s
    lo_e, hi_e = cfg.e_bounds
    out = {}
    for nid in node_ids(cfg):
        amp_t = max(0.1, 1.0 + cfg.rf_amp_sigma * rng.standard_normal())
        ph_t = rng.uniform(lo_p, hi_p)
        amp_r = max(0.1, 1.0 + cfg.rf_amp_sigma * rng.standard_normal())
        ph_r = rng.uniform(lo_p, hi_p)
        tau = rng.uniform(lo_t, hi_t)
        e = rng.uniform(lo_e, hi_e)
        out[nid] = NodeImpairment(
            beta_t=amp_t * np.exp(1j * ph_t),
            beta_r=amp_r * np.exp(1j * ph_r),
            tau_s=tau,
            e=e,
        )
    return out


def zero_impairments(cfg: ScenarioConfig) -> dict:
    """All-ideal nodes: beta = 1, tau = 0, e = 0."""
    return {nid: NodeImpairment(1.0 + 0j, 1.0 + 0j, 0.0, 0.0) for nid in node_ids(cfg)}

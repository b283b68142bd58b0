"""Named end-to-end experiments and their artifacts.

Each plan runs a Monte Carlo loop of independent drops (draw impairments ->
generate channels -> pilot exchange -> calibrate -> track/sense -> metrics)
and writes per-series CSV files plus a manifest.json listing every artifact
with a sha256 content hash.  Drop d of a run with seed s uses the seed stream
SeedSequence((s, d)), so results do not depend on execution order.

Modeling conventions specific to the runner (the library itself is agnostic):
  * Baseline estimators (element-wise ratio, per-user mean, per-subcarrier
    TLS) are fed idealized full-CSI snapshots: every link observed on the
    common grid k = 0, M, 2M, ...  The two-step estimator uses only the
    orthogonal per-link echo combs it would get on the air.
  * Downlink pilots and the echo that answers them share one snapshot index:
    the intra-pattern turnaround is far shorter than the 0.625 ms pattern.
  * In dynamic plans the per-node frequency-offset bound is halved (15 ppb)
    so the one-way pilot phase step stays below pi and stays trackable at the
    fixed pattern rate; single-shot (static) plans keep the full 30 ppb.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import calibration, channel, config, metrics, pilots, sensing, tracking
from .config import C_LIGHT, NodeImpairment, ScenarioConfig

VERSION = "0.1.0"

PLAN_KINDS = ("quasi_static_cdf", "dynamic_cdf", "tracking_decay",
              "phase_rmse_sweep", "localization", "sensing_demo", "crlb_sweep")

DEFAULT_ALGOS = ("uncal", "argos", "argos_mean", "tls", "ml_tls", "genie")


class PlanError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    kind: str
    algorithms: tuple = DEFAULT_ALGOS
    drops: int = 200
    output_dir: str = "out"
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}; choose from {PLAN_KINDS}")
        if self.drops < 1:
            raise PlanError("drops must be >= 1")
        self.algorithms = tuple(self.algorithms)
        unknown = set(self.algorithms) - set(DEFAULT_ALGOS)
        if unknown:
            raise PlanError(f"unknown algorithms {sorted(unknown)}")


# ---------------------------------------------------------------------------
# default scenarios
# ---------------------------------------------------------------------------

def _ring(count, radius, phase=0.0):
    ang = 2.0 * np.pi * np.arange(count) / count + phase
    return [[round(radius * np.cos(a), 6), round(radius * np.sin(a), 6)] for a in ang]


def default_config_doc(kind: str = "quasi_static") -> dict:
    """Desk-scale scenario documents for each experiment family."""
    doc = {
        "system": {
            "carrier_freq_hz": 26.0e9,
            "subcarrier_spacing_hz": 120.0e3,
            "num_subcarriers": 256,
            "num_symbols": 64,
            "symbol_interval_s": 6.25e-4,
            "fft_size": 2048,
            "tx_power_dbm": 30.0,
            "noise_psd_dbm_hz": -174.0,
        },
        "impairments": {
            "rf_amp_sigma": 0.1,
            "tau_bounds_ns": [-10.0, 10.0],
            "e_bounds_ppb": [-30.0, 30.0],
        },
        "geometry": {
            "trp_positions_m": _ring(8, 50.0),
            "ue_positions_m": _ring(4, 15.0, 0.4) + _ring(4, 25.0, 1.1),
            "ue_velocities_mps": [[0.0, 0.0]] * 8,
        },
        "pilots": {"num_calib_ue": 4, "srs": [0], "csi_rs": [0], "cars": [0]},
        "run": {"seed": 0},
    }
    if kind in ("dynamic", "tracking", "phase_rmse"):
        doc["impairments"]["e_bounds_ppb"] = [-15.0, 15.0]
        doc["geometry"]["ue_velocities_mps"] = (
            [[0.0, 0.0]] * 4
            + [[3.5, 0.0], [-3.2, 1.4], [0.8, -3.6], [2.4, 2.9]])
    elif kind == "localization":
        doc["geometry"] = {
            "trp_positions_m": [[-60.0, -60.0], [60.0, -60.0],
                                [60.0, 60.0], [-60.0, 60.0]],
            "ue_positions_m": _ring(4, 15.0, 0.4) + [[10.0, 5.0]],
            "ue_velocities_mps": [[0.0, 0.0]] * 5,
        }
        doc["pilots"]["num_calib_ue"] = 4
    elif kind == "sensing":
        doc["geometry"] = {
            "trp_positions_m": [[0.0, 0.0]],
            "ue_positions_m": [[100.0, 0.0]],
            "ue_velocities_mps": [[0.0, 0.0]],
            "extra_paths": [{"link": [0, 0], "delta_distance_m": 65.0,
                             "velocity_mps": -3.2, "gain_db": -10.0}],
        }
        doc["pilots"]["num_calib_ue"] = 1
    return doc


def apply_overrides(doc: dict, overrides: dict) -> dict:
    """Deep-merge plan overrides into a config document (copies, no mutation)."""
    out = json.loads(json.dumps(doc))

    def merge(dst, src):
        for key, val in src.items():
            if isinstance(val, dict) and isinstance(dst.get(key), dict):
                merge(dst[key], val)
            else:
                dst[key] = val

    merge(out, overrides or {})
    return out


def _drop_seeds(seed: int, drop: int) -> tuple[int, int]:
    ss = np.random.SeedSequence((int(seed), int(drop)))
    a, b = ss.generate_state(2)
    return int(a), int(b)


# ---------------------------------------------------------------------------
# drop pipeline pieces
# ---------------------------------------------------------------------------

def _noise(rng, shape, sigma):
    if sigma == 0.0:
        return np.zeros(shape, dtype=complex)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        * (sigma / np.sqrt(2.0))


def _link_channels(cfg, imps, m, n, k_indices, l_indices):
    meta = channel.make_meta(cfg, k_indices, l_indices)
    ota = channel.generate_ota(channel.paths_from_geometry(cfg, m, n), meta)
    ul = channel.apply_impairments(ota, imps[f"ue{n}"], imps[f"trp{m}"], "UL")
    dl = channel.apply_impairments(ota, imps[f"trp{m}"], imps[f"ue{n}"], "DL")
    return ota, ul, dl


def _genie_cal(cfg, imps) -> calibration.CalibrationSet:
    """Exact node coefficients straight from the drawn impairments."""
    M, N = cfg.num_trp, cfg.num_calib_ue
    c_bs = np.array([imps[f"trp{m}"].beta_t / imps[f"trp{m}"].beta_r
                     for m in range(M)])
    c_ue = np.array([imps[f"ue{n}"].beta_t / imps[f"ue{n}"].beta_r
                     for n in range(N)])
    c_bs, c_ue = c_bs / c_bs[-1], c_ue / c_bs[-1]
    tau_bs = np.array([imps[f"trp{m}"].tau_s for m in range(M)])
    tau_ue = np.array([imps[f"ue{n}"].tau_s for n in range(N)])
    shift = tau_bs[-1]
    return calibration.CalibrationSet(c_bs=c_bs, c_ue=c_ue,
                                      c_link=c_ue[None, :] / c_bs[:, None],
                                      tau_hat=tau_ue[None, :] - tau_bs[:, None],
                                      tau_bs=tau_bs - shift, tau_ue=tau_ue - shift)


def _run_calibration(cfg, imps, rng, algos, l_cal=0.0):
    """One calibration shot over the calib-UE set; returns {algo: CalibrationSet}."""
    M, Ncal, K = cfg.num_trp, cfg.num_calib_ue, cfg.num_subcarriers
    df = cfg.subcarrier_spacing_hz
    kgrid = np.arange(K) * M
    pm = pilots.build_pilot_map(M, Ncal, K)
    sigma_full = channel.estimate_noise_std(cfg, K)

    need_baseline = bool({"argos", "argos_mean", "tls"} & set(algos))
    need_ml = "ml_tls" in algos
    G = np.empty((M, Ncal, K), dtype=complex)
    Hdl = np.empty((Ncal, M, K), dtype=complex)
    eqs = {}
    for m in range(M):
        for n in range(Ncal):
            if need_baseline:
                _, ul, dl = _link_channels(cfg, imps, m, n, kgrid, [l_cal])
                G[m, n] = ul.values[:, 0] + _noise(rng, K, sigma_full)
                Hdl[n, m] = dl.values[:, 0] + _noise(rng, K, sigma_full)
            if need_ml:
                kcomb = pm.ue_indices(m, n)
                _, ul_c, dl_c = _link_channels(cfg, imps, m, n, kcomb, [l_cal])
                dl_est = pilots.estimate_channel(
                    dl_c.values[:, 0] + _noise(rng, len(kcomb), sigma_full))
                sigma_echo = channel.estimate_noise_std(cfg, len(kcomb))
                eqs[(m, n)] = pilots.cars_round_trip(
                    dl_est, ul_c.values[:, 0], kcomb, l_cal,
                    noise=_noise(rng, len(kcomb), sigma_echo), equalize=True)

    lo, hi = cfg.tau_bounds_s
    window = (2.0 * lo - 1e-9, 2.0 * hi + 1e-9)
    cals = {}
    for algo in algos:
        if algo == "uncal":
            cals[algo] = None
        elif algo == "genie":
            cals[algo] = _genie_cal(cfg, imps)
        elif algo == "argos":
            # single reference user, node-convention: c_bs = C_ref / C_m
            C, _ = calibration.argos(G, Hdl)
            c_bs = C[-1, 0, :] / C[:, 0, :]
            cals[algo] = calibration.CalibrationSet(c_bs=c_bs, k_indices=kgrid)
        elif algo == "argos_mean":
            cal = calibration.argos_mean(G, Hdl)
            cal.k_indices = kgrid
            cals[algo] = cal
        elif algo == "tls":
            cal = calibration.tls_classic(G, Hdl)
            cal.k_indices = kgrid
            cals[algo] = cal
        elif algo == "ml_tls":
            cals[algo] = calibration.two_step_ml_tls(eqs, M, Ncal, df, window)
    return cals, kgrid


def _dl_prediction(cfg, cal, ul_meas, ksub):
    """Per-port DL prediction from a fresh UL measurement (ports x subcarriers)."""
    if cal is None:
        return ul_meas
    F = cal.bs_port_coeff(ksub, cfg.subcarrier_spacing_hz)
    return ul_meas / F


def _single_user_se(cfg, h_true, h_hat):
    """Mean log2(1 + SNR) of single-stream conjugate beamforming on one user.

    h_true/h_hat: (M, Ksub).  Transmit power is split over the K occupied
    subcarriers; the noise floor is the per-subcarrier thermal power.
    """
    norms = np.linalg.norm(h_hat, axis=0)
    w = np.conj(h_hat) / np.maximum(norms[None, :], 1e-300)
    sig = np.abs(np.sum(h_true * w, axis=0)) ** 2
    p_sc = cfg.tx_power_w / cfg.num_subcarriers
    n0 = cfg.noise_power_per_subcarrier_w
    if n0 == 0.0:
        n0 = 1e-30
    return float(np.mean(np.log2(1.0 + sig * p_sc / n0)))


def _crossport_rmse_deg(h_hat, h_true):
    """Cross-port phase misalignment (deg): per subcarrier, the RMS wrapped
    phase error across ports after removing that subcarrier's mean rotation.
    This is the error coherent combining actually sees."""
    rot = h_hat * np.conj(h_true)
    rot = rot / np.maximum(np.abs(rot), 1e-300)
    errs = []
    for k in range(rot.shape[1]):
        common = np.angle(np.sum(rot[:, k]))
        errs.append(np.angle(rot[:, k] * np.exp(-1j * common)))
    return float(np.degrees(np.sqrt(np.mean(np.concatenate(errs) ** 2))))


def _eval_links(cfg):
    return list(range(cfg.num_calib_ue, cfg.num_ue))


def _quasi_static_drop(cfg, imp_seed, noise_seed, algos):
    """SE of each algorithm on the held-out users, one static drop."""
    imps = config.draw_impairments(cfg, imp_seed)
    rng = np.random.default_rng(noise_seed)
    cals, kgrid = _run_calibration(cfg, imps, rng, algos)
    ksub = kgrid[:: max(1, len(kgrid) // 8)]
    sub = np.searchsorted(kgrid, ksub)
    sigma = channel.estimate_noise_std(cfg, cfg.num_subcarriers)
    M = cfg.num_trp
    se = {a: [] for a in algos}
    for u in _eval_links(cfg):
        h_true = np.empty((M, len(ksub)), dtype=complex)
        ul_meas = np.empty((M, len(ksub)), dtype=complex)
        for m in range(M):
            _, ul, dl = _link_channels(cfg, imps, m, u, ksub, [0.0])
            h_true[m] = dl.values[:, 0]
            ul_meas[m] = ul.values[:, 0] + _noise(rng, len(ksub), sigma)
        for a in algos:
            h_hat = _dl_prediction(cfg, cals[a], ul_meas, ksub)
            se[a].append(_single_user_se(cfg, h_true, h_hat))
    return {a: float(np.mean(v)) for a, v in se.items()}


def _pulse_pair_rate(block: np.ndarray, T: float) -> float:
    """Mean slow-time rotation rate (Hz) of a (K, L) block."""
    acc = np.sum(block[:, 1:] * np.conj(block[:, :-1]))
    if abs(acc) < 1e-300:
        return 0.0
    return float(np.angle(acc) / (2.0 * np.pi * T))


def _dominant_path_rate(block: np.ndarray, T: float) -> float:
    """Slow-time rotation rate (Hz) of the strongest range bin only, so weaker
    paths at other delays do not bias the estimate."""
    prof = np.fft.ifft(block, axis=0)
    r = int(np.argmax(np.mean(np.abs(prof) ** 2, axis=1)))
    return _pulse_pair_rate(prof[r:r + 1, :], T)


def _dynamic_drop(cfg, imp_seed, noise_seed, n_patterns, warmup=16,
                  methods=("ideal", "uncal", "stale", "direct", "sa")):
    """Tracking experiment on moving held-out users.

    Calibrates once at pattern 0 (two-step estimator on the static calib
    users), then serves the moving users every pattern from fresh UL pilots
    with the per-port coefficients either frozen (stale), phase-tracked
    directly, or tracked with the sensed Doppler removed (sa).  Returns SE
    and cross-port phase-RMSE traces per method.
    """
    imps = config.draw_impairments(cfg, imp_seed)
    rng = np.random.default_rng(noise_seed)
    cals, kgrid = _run_calibration(cfg, imps, rng, ("ml_tls",))
    cal = cals["ml_tls"]
    M, Ncal = cfg.num_trp, cfg.num_calib_ue
    df, fc, T = cfg.subcarrier_spacing_hz, cfg.carrier_freq_hz, cfg.symbol_interval_s
    ksub = kgrid[:: max(1, len(kgrid) // 8)]
    Ks = len(ksub)
    sigma = channel.estimate_noise_std(cfg, cfg.num_subcarriers)
    l_all = np.arange(n_patterns, dtype=float)
    evals = _eval_links(cfg)

    # per-TRP drift rates from the static calib links (pulse-pair over warmup)
    f_cal = np.empty((M, Ncal))
    for m in range(M):
        for n in range(Ncal):
            _, ul, _ = _link_channels(cfg, imps, m, n, ksub, l_all[:warmup])
            obs = ul.values + _noise(rng, ul.values.shape, sigma)
            f_cal[m, n] = _pulse_pair_rate(obs, T)
    f_bs, _ = calibration.decompose_link_offsets(f_cal)   # ~ e_trp * fc, relative

    F = cal.bs_port_coeff(ksub, df)                        # (M, Ks)
    se = {meth: np.zeros(n_patterns) for meth in methods}
    rmse = {meth: [[] for _ in range(n_patterns)] for meth in methods}

    for u in evals:
        h_true = np.empty((M, Ks, n_patterns), dtype=complex)
        ul_obs = np.empty((M, Ks, n_patterns), dtype=complex)
        f_hat = np.empty(M)
        for m in range(M):
            _, ul, dl = _link_channels(cfg, imps, m, u, ksub, l_all)
            h_true[m] = dl.values
            ul_obs[m] = ul.values + _noise(rng, ul.values.shape, sigma)
            # sensed slow-time rate minus the known TRP drift -> Doppler
            # (the user's own drift stays in as a port-common rotation)
            f_hat[m] = _pulse_pair_rate(ul_obs[m, :, :warmup], T) + f_bs[m]
        states = {}
        if "direct" in methods:
            states["direct"] = [tracking.TrackState.start(F[m], ul_obs[m, :, 0], 0.0)
                                for m in range(M)]
        if "sa" in methods:
            states["sa"] = [tracking.TrackState.start(F[m], ul_obs[m, :, 0], 0.0)
                            for m in range(M)]
        coeff = {meth: F.copy() for meth in states}
        for l in range(n_patterns):
            if l > 0:
                for m in range(M):
                    if "direct" in states:
                        st = states["direct"][m]
                        _, c = tracking.track_quasi_static(st, ul_obs[m, :, l], float(l))
                        coeff["direct"][m] = c
                    if "sa" in states:
                        st = states["sa"][m]
                        step = np.exp(2j * np.pi * f_hat[m] * T)
                        _, c = tracking.track_sensing_assisted(
                            st, ul_obs[m, :, l], float(l),
                            recon_new=np.full(Ks, step), recon_last=np.ones(Ks))
                        coeff["sa"][m] = c
            ht = h_true[:, :, l]
            preds = {}
            for meth in methods:
                if meth == "ideal":
                    preds[meth] = ht
                elif meth == "uncal":
                    preds[meth] = ul_obs[:, :, l]
                elif meth == "stale":
                    preds[meth] = ul_obs[:, :, l] / F
                else:
                    preds[meth] = ul_obs[:, :, l] / coeff[meth]
            for meth, h_hat in preds.items():
                se[meth][l] += _single_user_se(cfg, ht, h_hat) / len(evals)
                rmse[meth][l].append(_crossport_rmse_deg(h_hat, ht))
    rmse_out = {meth: np.array([float(np.mean(v)) for v in vals])
                for meth, vals in rmse.items()}
    return se, rmse_out


# ---------------------------------------------------------------------------
# artifact plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class _Artifacts:
    """Collects output files and builds the manifest."""

    def __init__(self, outdir):
        self.outdir = outdir
        os.makedirs(outdir, exist_ok=True)
        self.files = []

    def add_series(self, name, kind, header, rows, x_label="", y_label=""):
        path = os.path.join(self.outdir, name)
        _write_csv(path, header, rows)
        self.files.append({"path": name, "kind": kind, "sha256": _sha256(path),
                           "x_label": x_label, "y_label": y_label})

    def add_cdf(self, name, samples, x_label):
        series = metrics.empirical_cdf(np.asarray(samples))
        self.add_series(name, "cdf", ["value", "prob"],
                        list(zip(series.x, series.y)),
                        x_label=x_label, y_label="P(X <= x)")

    def add_line(self, name, x, y, x_label, y_label):
        self.add_series(name, "line", ["x", "value"], list(zip(x, y)),
                        x_label=x_label, y_label=y_label)


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

def _plan_quasi_static(plan, cfg, art):
    per_algo = {a: [] for a in plan.algorithms}
    failed = []
    for d in range(plan.drops):
        s1, s2 = _drop_seeds(plan.seed, d)
        try:
            se = _quasi_static_drop(cfg, s1, s2, plan.algorithms)
        except Exception as exc:   # crash isolation: record, keep going
            failed.append({"drop": d, "error": repr(exc)})
            continue
        for a, v in se.items():
            per_algo[a].append(v)
    for a, vals in per_algo.items():
        if vals:
            art.add_cdf(f"se_cdf_{a}.csv", vals, "spectral efficiency (b/s/Hz)")
    return failed


def _plan_dynamic_cdf(plan, cfg, art, pattern=10):
    methods = ("ideal", "uncal", "stale", "direct", "sa")
    per = {m: [] for m in methods}
    failed = []
    for d in range(plan.drops):
        s1, s2 = _drop_seeds(plan.seed, d)
        try:
            se, _ = _dynamic_drop(cfg, s1, s2, pattern + 1, methods=methods)
        except Exception as exc:
            failed.append({"drop": d, "error": repr(exc)})
            continue
        for m in methods:
            per[m].append(se[m][pattern])
    for m, vals in per.items():
        if vals:
            art.add_cdf(f"se_cdf_dyn_{m}.csv", vals, "spectral efficiency (b/s/Hz)")
    return failed


def _plan_tracking_decay(plan, cfg, art, n_patterns=60):
    methods = ("ideal", "uncal", "stale", "direct", "sa")
    acc = {m: np.zeros(n_patterns) for m in methods}
    count = 0
    failed = []
    for d in range(plan.drops):
        s1, s2 = _drop_seeds(plan.seed, d)
        try:
            se, _ = _dynamic_drop(cfg, s1, s2, n_patterns, methods=methods)
        except Exception as exc:
            failed.append({"drop": d, "error": repr(exc)})
            continue
        for m in methods:
            acc[m] += se[m]
        count += 1
    x = np.arange(n_patterns)
    for m in methods:
        if count:
            art.add_line(f"se_decay_{m}.csv", x, acc[m] / count,
                         "TDD pattern index", "spectral efficiency (b/s/Hz)")
    return failed


def _plan_phase_rmse(plan, cfg, art, powers_dbm=(-10.0, 0.0, 10.0, 20.0, 30.0, 40.0),
                     pattern=30):
    static_rmse, dyn_sa, dyn_stale = [], [], []
    failed = []
    for p in powers_dbm:
        cfg_p = replace(cfg, tx_power_dbm=float(p))
        vals = {"static": [], "sa": [], "stale": []}
        for d in range(plan.drops):
            s1, s2 = _drop_seeds(plan.seed, d)
            try:
                # static single-shot accuracy on the calib links
                imps = config.draw_impairments(cfg_p, s1)
                rng = np.random.default_rng(s2)
                cals, kgrid = _run_calibration(cfg_p, imps, rng, ("ml_tls",))
                cal = cals["ml_tls"]
                ksub = kgrid[:: max(1, len(kgrid) // 8)]
                errs = []
                for m in range(cfg_p.num_trp):
                    for n in range(cfg_p.num_calib_ue):
                        c_hat = cal.link_coeff(m, n, ksub, cfg_p.subcarrier_spacing_hz)
                        c_true = calibration.ideal_link_coeff(
                            imps[f"trp{m}"], imps[f"ue{n}"], ksub,
                            cfg_p.subcarrier_spacing_hz, cfg_p.carrier_freq_hz,
                            cfg_p.symbol_interval_s, l=0.0)
                        errs.append(metrics.phase_error_deg(c_hat, c_true))
                vals["static"].append(
                    float(np.sqrt(np.mean(np.concatenate(errs) ** 2))))
                # maintained accuracy on moving users after `pattern` patterns
                _, rmse = _dynamic_drop(cfg_p, s1, s2, pattern + 1,
                                        methods=("stale", "sa"))
                vals["sa"].append(rmse["sa"][pattern])
                vals["stale"].append(rmse["stale"][pattern])
            except Exception as exc:
                failed.append({"drop": d, "power_dbm": p, "error": repr(exc)})
        static_rmse.append(float(np.mean(vals["static"])) if vals["static"] else math.nan)
        dyn_sa.append(float(np.mean(vals["sa"])) if vals["sa"] else math.nan)
        dyn_stale.append(float(np.mean(vals["stale"])) if vals["stale"] else math.nan)
    art.add_line("phase_rmse_mltls.csv", powers_dbm, static_rmse,
                 "tx power (dBm)", "phase RMSE (deg)")
    art.add_line("phase_rmse_dynamic_sa.csv", powers_dbm, dyn_sa,
                 "tx power (dBm)", "phase RMSE (deg)")
    art.add_line("phase_rmse_dynamic_stale.csv", powers_dbm, dyn_stale,
                 "tx power (dBm)", "phase RMSE (deg)")
    return failed


def _localization_drop(cfg, imp_seed, noise_seed):
    """Range-based position fix of the last user, calibrated vs. not."""
    rng = np.random.default_rng(noise_seed)
    target = cfg.num_ue - 1
    # randomize the target inside the hull, redrawn per drop
    base = np.asarray(cfg.geometry.ue_positions_m[target], dtype=float)
    pos = tuple(base + rng.uniform(-20.0, 20.0, size=base.shape))
    ue_pos = list(cfg.geometry.ue_positions_m)
    ue_pos[target] = pos
    cfg = replace(cfg, geometry=replace(cfg.geometry, ue_positions_m=tuple(ue_pos)))

    imps = config.draw_impairments(cfg, imp_seed)
    cals, kgrid = _run_calibration(cfg, imps, rng, ("ml_tls",))
    tau_bs = cals["ml_tls"].tau_bs
    M = cfg.num_trp
    df = cfg.subcarrier_spacing_hz
    sigma = channel.estimate_noise_std(cfg, cfg.num_subcarriers)
    trps = np.asarray(cfg.geometry.trp_positions_m, dtype=float)
    d_max = float(np.max(np.linalg.norm(
        trps - np.asarray(pos)[None, :], axis=1))) * 2.0
    window = (-20e-9, d_max / C_LIGHT + 20e-9)

    r_uncal = np.empty(M)
    r_cal = np.empty(M)
    for m in range(M):
        _, ul, _ = _link_channels(cfg, imps, m, target, kgrid, [0.0])
        obs = ul.values[:, 0] + _noise(rng, len(kgrid), sigma)
        tau_m, _ = calibration.ml_delay_coeff(obs, kgrid, df, window, doubled=False)
        r_uncal[m] = tau_m * C_LIGHT
        r_cal[m] = (tau_m + tau_bs[m]) * C_LIGHT
    p_true = np.asarray(pos, dtype=float)
    p_u, _, _ = sensing.localize(r_uncal, trps, estimate_bias=True)
    p_c, _, _ = sensing.localize(r_cal, trps, estimate_bias=True)
    return (float(np.linalg.norm(p_u - p_true)),
            float(np.linalg.norm(p_c - p_true)))


def _plan_localization(plan, cfg, art):
    errs_u, errs_c = [], []
    failed = []
    for d in range(plan.drops):
        s1, s2 = _drop_seeds(plan.seed, d)
        try:
            eu, ec = _localization_drop(cfg, s1, s2)
        except Exception as exc:
            failed.append({"drop": d, "error": repr(exc)})
            continue
        errs_u.append(eu)
        errs_c.append(ec)
    if errs_u:
        art.add_cdf("loc_err_cdf_uncal.csv", errs_u, "position error (m)")
        art.add_cdf("loc_err_cdf_cal.csv", errs_c, "position error (m)")
    return failed


def sensing_demo_impairments(cfg) -> dict:
    """Fixed impairments for the sensing walkthrough: a 30 ppb user clock and
    modest timing offsets, everything else ideal."""
    imps = dict(config.zero_impairments(cfg))
    imps["trp0"] = NodeImpairment(1.0 + 0j, 1.0 + 0j, 3e-9, 0.0)
    imps["ue0"] = NodeImpairment(1.0 + 0j, 1.0 + 0j, -4e-9, 30e-9)
    return imps


def run_sensing_demo(cfg, seed=0):
    """Single-link walkthrough: uncalibrated map, calibration, recovered map,
    clutter-filtered detections and the oscillator-drift track.

    Returns a dict of arrays/objects; the plan wrapper serializes them.
    """
    imps = sensing_demo_impairments(cfg)
    rng = np.random.default_rng(seed)
    K, L = cfg.num_subcarriers, cfg.num_symbols
    df, fc, T = cfg.subcarrier_spacing_hz, cfg.carrier_freq_hz, cfg.symbol_interval_s
    kgrid = np.arange(K)
    l_all = np.arange(L, dtype=float)
    sigma = channel.estimate_noise_std(cfg, K)
    _, ul, dl = _link_channels(cfg, imps, 0, 0, kgrid, l_all)
    obs = channel.ChannelTensor(ul.values + _noise(rng, ul.values.shape, sigma),
                                "UL", ul.meta)
    rd_pre = sensing.range_doppler(obs, window="hann")

    # calibrate the link: echo at pattern 0 for (tau, ratio), slow-time
    # rotation of the pilot for the frequency offset
    dl_est = pilots.estimate_channel(dl.values[:, 0] + _noise(rng, K, sigma))
    eq = pilots.cars_round_trip(dl_est, ul.values[:, 0], kgrid, 0.0,
                                noise=_noise(rng, K, sigma))
    lo, hi = cfg.tau_bounds_s
    tau_hat, ratio = calibration.ml_delay_coeff(
        eq.values[eq.usable], eq.k_indices[eq.usable], df,
        (2 * lo - 1e-9, 2 * hi + 1e-9))
    e_hat = _dominant_path_rate(obs.values, T) / fc

    recovered = sensing.recover_ota(obs, ratio, tau_hat, e_hat)
    rd_post = sensing.range_doppler(recovered, window="hann")
    filtered = sensing.mti_filter(recovered)
    rd_mti = sensing.range_doppler(filtered, window="hann")
    detections = sensing.cfar_detect(rd_mti, pfa=1e-4)
    t_axis, drift = sensing.stft_offset(obs.values[0, :], window_len=32, hop=4, T=T)
    return {"rd_pre": rd_pre, "rd_post": rd_post, "rd_mti": rd_mti,
            "detections": detections, "drift_t": t_axis, "drift_hz": drift,
            "tau_hat": tau_hat, "e_hat": e_hat}


def _heatmap_rows(rd):
    rows = []
    for i, r in enumerate(rd.range_axis_m):
        for j, v in enumerate(rd.velocity_axis_mps):
            rows.append((r, v, rd.power_db[i, j]))
    return rows


def _plan_sensing_demo(plan, cfg, art):
    out = run_sensing_demo(cfg, seed=plan.seed)
    hdr = ["range_m", "velocity_mps", "power_db"]
    art.add_series("rd_map_uncal.csv", "heatmap", hdr, _heatmap_rows(out["rd_pre"]),
                   x_label="velocity (m/s)", y_label="range (m)")
    art.add_series("rd_map_cal.csv", "heatmap", hdr, _heatmap_rows(out["rd_post"]),
                   x_label="velocity (m/s)", y_label="range (m)")
    art.add_series("rd_map_mti.csv", "heatmap", hdr, _heatmap_rows(out["rd_mti"]),
                   x_label="velocity (m/s)", y_label="range (m)")
    art.add_series("detections.csv", "line",
                   ["range_m", "velocity_mps", "power_db"],
                   [(p.d_hat_m, p.v_hat_mps, p.power_db) for p in out["detections"]],
                   x_label="range (m)", y_label="velocity (m/s)")
    art.add_series("drift_track.csv", "track", ["t_s", "freq_hz"],
                   list(zip(out["drift_t"], out["drift_hz"])),
                   x_label="time (s)", y_label="dominant frequency (Hz)")
    return []


def _plan_crlb(plan, cfg, art, rho_db=None):
    if rho_db is None:
        rho_db = list(np.arange(-10.0, 41.0, 5.0))
    K, L = cfg.num_subcarriers, cfg.num_symbols
    rows_d, rows_v, rows_t = [], [], []
    for r in rho_db:
        rep = sensing.crlb(10.0 ** (r / 10.0), K, L,
                           cfg.subcarrier_spacing_hz * cfg.num_trp,
                           cfg.symbol_interval_s, cfg.carrier_freq_hz)
        rows_d.append((r, math.sqrt(rep.d_crlb_m2)))
        rows_v.append((r, math.sqrt(rep.v_crlb)))
        rows_t.append((r, rep.theta_total))
    art.add_series("crlb_range_rmse.csv", "line", ["x", "value"], rows_d,
                   x_label="SNR (dB)", y_label="range RMSE bound (m)")
    art.add_series("crlb_velocity_rmse.csv", "line", ["x", "value"], rows_v,
                   x_label="SNR (dB)", y_label="velocity RMSE bound (m/s)")
    art.add_series("crlb_phase_var.csv", "line", ["x", "value"], rows_t,
                   x_label="SNR (dB)", y_label="phase error variance (rad^2)")
    return []


_PLAN_FUNCS = {
    "quasi_static_cdf": _plan_quasi_static,
    "dynamic_cdf": _plan_dynamic_cdf,
    "tracking_decay": _plan_tracking_decay,
    "phase_rmse_sweep": _plan_phase_rmse,
    "localization": _plan_localization,
    "sensing_demo": _plan_sensing_demo,
    "crlb_sweep": _plan_crlb,
}


def run(plan: ExperimentPlan, cfg: ScenarioConfig,
        config_bytes: bytes | None = None) -> int:
    """Execute a plan end-to-end; returns the process exit status.

    The manifest (written last) is a pure function of (plan, config, seed,
    VERSION): no timestamps, sorted keys, content-hashed files.
    """
    art = _Artifacts(plan.output_dir)
    failed = _PLAN_FUNCS[plan.kind](plan, cfg, art)
    if config_bytes is None:
        config_bytes = repr(cfg).encode()
    manifest = {
        "version": VERSION,
        "plan": {"kind": plan.kind, "algorithms": list(plan.algorithms),
                 "drops": plan.drops, "seed": plan.seed,
                 "overrides": plan.overrides},
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "files": sorted(art.files, key=lambda f: f["path"]),
        "failed_drops": failed,
    }
    path = os.path.join(plan.output_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 1 if len(failed) > 0.01 * plan.drops else 0

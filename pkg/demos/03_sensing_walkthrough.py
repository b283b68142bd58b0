# Calibration-assisted sensing on one link
# ----------------------------------------
# A static LOS user whose 30 ppb oscillator smears the range-Doppler map off
# the zero-Doppler bin, plus a weak mover 65 m farther out at -3.2 m/s.
# Calibration estimates (tau, e) for the link; stripping them re-centers the
# static scene, and MTI + CFAR then picks out the mover cleanly.

import numpy as np

from simcal import config, runner, sensing

cfg = config.load_scenario(runner.default_config_doc("sensing"))
out = runner.run_sensing_demo(cfg, seed=0)

print(f"estimated link offsets: tau={out['tau_hat']*1e9:+.3f} ns, "
      f"e={out['e_hat']*1e9:+.3f} ppb")

for name, rd in (("uncalibrated", out["rd_pre"]), ("recovered", out["rd_post"])):
    r, p = np.unravel_index(np.argmax(rd.power_db), rd.power_db.shape)
    off = p - rd.zero_doppler_index
    print(f"{name:13s} map: LOS peak at {rd.range_axis_m[r]:6.1f} m, "
          f"Doppler bin {off:+d} ({rd.velocity_axis_mps[p]:+.2f} m/s)")

print("\nMTI + CFAR detections on the recovered map:")
for det in out["detections"]:
    print(f"  {det.d_hat_m:7.2f} m  {det.v_hat_mps:+7.3f} m/s  "
          f"{det.power_db:7.1f} dB")

# the same drift is visible in slow time: a short-time spectral track of one
# subcarrier shows the oscillator tone e*fc before calibration
f = out["drift_hz"]
print(f"\nSTFT drift track: {np.mean(f):.1f} Hz mean "
      f"(expect ~{30e-9 * cfg.carrier_freq_hz:.0f} Hz for 30 ppb)")

# what these estimates are worth downstream
rep = sensing.crlb(rho=10.0 ** 2.0, K=cfg.num_subcarriers, L=cfg.num_symbols,
                   df=cfg.subcarrier_spacing_hz, T=cfg.symbol_interval_s,
                   fc=cfg.carrier_freq_hz)
print(f"\nat 20 dB SNR the single-path bounds are "
      f"{np.sqrt(rep.d_crlb_m2)*100:.2f} cm range / "
      f"{np.sqrt(rep.v_crlb)*100:.3f} cm/s velocity")

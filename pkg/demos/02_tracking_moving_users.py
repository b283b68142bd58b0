# Keeping calibration alive while users move
# -------------------------------------------
# Calibration coefficients drift with the node oscillators (~ppb at 26 GHz is
# hundreds of Hz).  With static users the drift can be tracked from one-way
# pilots directly; once users move, their Doppler leaks into the tracked
# phase and direct tracking collapses within a few TDD patterns.  Removing
# the sensed Doppler first (sensing-assisted tracking) keeps it alive.

import numpy as np

from simcal import config, runner

cfg = config.load_scenario(runner.default_config_doc("dynamic"))
speeds = [np.hypot(*v) for v in cfg.geometry.ue_velocities_mps[cfg.num_calib_ue:]]
print(f"moving evaluation users at {min(speeds):.1f}-{max(speeds):.1f} m/s, "
      f"TDD pattern T={cfg.symbol_interval_s*1e3:g} ms")

n_patterns, drops = 50, 10
methods = ("ideal", "uncal", "stale", "direct", "sa")
acc = {m: np.zeros(n_patterns) for m in methods}
for d in range(drops):
    s1, s2 = runner._drop_seeds(0, d)
    se, _ = runner._dynamic_drop(cfg, s1, s2, n_patterns)
    for m in methods:
        acc[m] += se[m] / drops

# express everything as the fraction of the coherent gain that survives
span = acc["ideal"] - acc["uncal"]
print("\nfraction of coherent SE gain retained vs. TDD pattern:")
print(f"{'pattern':>8} {'stale':>8} {'direct':>8} {'assisted':>9}")
for l in (1, 2, 5, 10, 20, 30, 40, 49):
    row = [(acc[m][l] - acc["uncal"][l]) / span[l]
           for m in ("stale", "direct", "sa")]
    print(f"{l:8d} {row[0]:8.3f} {row[1]:8.3f} {row[2]:9.3f}")

print("\ndirect tracking absorbs the Doppler into the coefficient and is")
print("worse than useless within ~5 patterns; the assisted tracker holds")
print("nearly the full gain across the whole horizon.")

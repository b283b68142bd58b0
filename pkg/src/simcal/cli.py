"""Command line entry point.

Subcommands:
  run       execute a named experiment plan and write CSV/manifest artifacts
  validate  parse and check a scenario config, printing the resolved summary
  crlb      print delay/Doppler estimation bounds for a list of SNRs
"""

from __future__ import annotations

import argparse
import json
import sys

from . import runner, sensing
from .config import ConfigError, load_scenario


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simcal",
                                description="reciprocity-calibration simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment plan")
    run_p.add_argument("--config", required=True, help="scenario config JSON")
    run_p.add_argument("--plan", required=True, choices=runner.PLAN_KINDS)
    run_p.add_argument("--drops", type=int, default=200)
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--algo", default=None,
                       help="comma-separated algorithm subset")
    run_p.add_argument("--noiseless", action="store_true")

    val_p = sub.add_parser("validate", help="check a scenario config")
    val_p.add_argument("--config", required=True)

    crlb_p = sub.add_parser("crlb", help="print estimation bounds")
    crlb_p.add_argument("--rho-db", required=True,
                        help="comma-separated SNR list in dB")
    crlb_p.add_argument("--config", default=None,
                        help="optional config for K/L/spacing (defaults used otherwise)")
    return p


def _load(path: str):
    with open(path, "rb") as fh:
        raw = fh.read()
    return load_scenario(raw.decode()), raw


def _cmd_run(args) -> int:
    cfg, raw = _load(args.config)
    overrides = {"run": {}}
    if args.seed is not None:
        overrides["run"]["seed"] = args.seed
    if args.noiseless:
        overrides["run"]["noiseless"] = True
    if overrides["run"]:
        doc = runner.apply_overrides(json.loads(raw.decode()), overrides)
        cfg = load_scenario(doc)
    algos = runner.DEFAULT_ALGOS if args.algo is None \
        else tuple(a.strip() for a in args.algo.split(",") if a.strip())
    plan = runner.ExperimentPlan(kind=args.plan, algorithms=algos,
                                 drops=args.drops, output_dir=args.out,
                                 seed=cfg.seed, overrides=overrides)
    status = runner.run(plan, cfg, config_bytes=raw)
    print(f"{args.plan}: wrote {args.out}/manifest.json"
          + ("" if status == 0 else " (with failed drops)"))
    return status


def _cmd_validate(args) -> int:
    try:
        cfg, _ = _load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {cfg.num_trp} TRPs, {cfg.num_ue} UEs "
          f"({cfg.num_calib_ue} calibrating), K={cfg.num_subcarriers}, "
          f"L={cfg.num_symbols}, fc={cfg.carrier_freq_hz / 1e9:g} GHz, "
          f"df={cfg.subcarrier_spacing_hz / 1e3:g} kHz, "
          f"T={cfg.symbol_interval_s * 1e3:g} ms, seed={cfg.seed}")
    return 0


def _cmd_crlb(args) -> int:
    if args.config is not None:
        cfg, _ = _load(args.config)
        K, L = cfg.num_subcarriers, cfg.num_symbols
        df = cfg.subcarrier_spacing_hz * cfg.num_trp
        T, fc = cfg.symbol_interval_s, cfg.carrier_freq_hz
    else:
        K, L, df, T, fc = 256, 64, 960.0e3, 6.25e-4, 26.0e9
    try:
        rhos = [float(x) for x in args.rho_db.split(",") if x.strip()]
    except ValueError:
        print("invalid --rho-db list", file=sys.stderr)
        return 1
    print(f"{'rho_db':>8} {'range_rmse_m':>14} {'vel_rmse_mps':>14} {'phase_var_rad2':>15}")
    for r in rhos:
        rep = sensing.crlb(10.0 ** (r / 10.0), K, L, df, T, fc)
        print(f"{r:8.1f} {rep.d_crlb_m2 ** 0.5:14.6g} "
              f"{rep.v_crlb ** 0.5:14.6g} {rep.theta_total:15.6g}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_crlb(args)
    except (ConfigError, runner.PlanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

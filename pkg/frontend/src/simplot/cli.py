"""Batch figure generation from a simulator manifest.

Usage: simplot --manifest out/manifest.json --figures all --out figs/

Reads the manifest's file list (path, kind, axis labels), renders one image
per CSV, and overlays all CDF files of a run into an additional combined
figure.  ``--figures`` takes ``all``, a comma-separated list of file stems
(``se_cdf_tls``), or figure kinds (``cdf,heatmap``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .figures import KINDS, FigureSpec, PlotError, render


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simplot",
                                description="render figures from simulator CSVs")
    p.add_argument("--manifest", required=True, help="manifest.json from a run")
    p.add_argument("--figures", default="all",
                   help="'all', or comma-separated file stems / figure kinds")
    p.add_argument("--out", default="figs", help="output directory for images")
    p.add_argument("--format", default="png", choices=("png", "svg", "pdf"))
    return p


def _selected(entry: dict, wanted: set | None) -> bool:
    if wanted is None:
        return True
    stem = os.path.splitext(os.path.basename(entry["path"]))[0]
    return stem in wanted or entry["kind"] in wanted


def specs_from_manifest(manifest: dict, base_dir: str, out_dir: str,
                        fmt: str = "png", wanted: set | None = None) -> list:
    specs = []
    cdf_entries = []
    for entry in manifest.get("files", []):
        if entry["kind"] not in KINDS or not _selected(entry, wanted):
            continue
        stem = os.path.splitext(os.path.basename(entry["path"]))[0]
        specs.append(FigureSpec(
            inputs=(os.path.join(base_dir, entry["path"]),),
            kind=entry["kind"],
            output_path=os.path.join(out_dir, f"{stem}.{fmt}"),
            x_label=entry.get("x_label", ""),
            y_label=entry.get("y_label", ""),
            title=stem,
        ))
        if entry["kind"] == "cdf":
            cdf_entries.append(entry)
    if len(cdf_entries) > 1:
        specs.append(FigureSpec(
            inputs=tuple(os.path.join(base_dir, e["path"]) for e in cdf_entries),
            kind="cdf",
            output_path=os.path.join(out_dir, f"cdf_combined.{fmt}"),
            x_label=cdf_entries[0].get("x_label", ""),
            y_label=cdf_entries[0].get("y_label", ""),
            title="cdf_combined",
        ))
    return specs


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return 1
    wanted = None if args.figures.strip() == "all" else \
        {w.strip() for w in args.figures.split(",") if w.strip()}
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    try:
        specs = specs_from_manifest(manifest, base_dir, args.out,
                                    fmt=args.format, wanted=wanted)
        if not specs:
            print("error: no matching figures in manifest", file=sys.stderr)
            return 1
        for spec in specs:
            print(f"{spec.kind:8s} -> {render(spec)}")
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

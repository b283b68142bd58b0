"""Figure rendering from simulator CSV artifacts.

This package never computes science: every plotted number is read from an
input CSV; the only transforms applied are axis placement and the gridding
of (y, x, value) triples into a heatmap matrix.  Output is deterministic:
a fixed style, the Agg backend, and no timestamps in the image metadata.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("cdf", "line", "heatmap", "track")

# expected leading columns per figure kind; extra columns are tolerated
EXPECTED_COLUMNS = {
    "cdf": ("value", "prob"),
    "line": None,            # any two leading numeric columns
    "heatmap": ("range_m", "velocity_mps", "power_db"),
    "track": ("t_s", "freq_hz"),
}

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "simplot",
}


class PlotError(ValueError):
    pass


@dataclass
class FigureSpec:
    """One figure: input CSVs, figure kind, labels, output image path."""

    inputs: tuple            # CSV paths, overlaid on one axes (heatmap: exactly one)
    kind: str
    output_path: str
    x_label: str = ""
    y_label: str = ""
    title: str = ""
    labels: tuple = field(default_factory=tuple)  # legend labels, one per input

    def __post_init__(self):
        self.inputs = tuple(self.inputs)
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise PlotError("FigureSpec needs at least one input CSV")
        if self.kind == "heatmap" and len(self.inputs) != 1:
            raise PlotError("heatmap figures take exactly one input CSV")
        for p in self.inputs:
            if not os.path.exists(p):
                raise PlotError(f"input CSV not found: {p}")


def read_table(path: str, kind: str) -> tuple[list, np.ndarray]:
    """Read a CSV, validate its header against the kind, return (header, data)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PlotError(f"{path}: file is empty (no header)")
    header, body = rows[0], rows[1:]
    expected = EXPECTED_COLUMNS[kind]
    if expected is not None and tuple(header[:len(expected)]) != expected:
        raise PlotError(f"{path}: column names {header} do not match the "
                        f"{kind} schema {list(expected)}")
    if len(header) < 2:
        raise PlotError(f"{path}: need at least two columns, got {header}")
    if not body:
        raise PlotError(f"{path}: no data rows")
    try:
        data = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise PlotError(f"{path}: non-numeric cell ({exc})") from None
    return header, data


def grid_heatmap(data: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pivot (y, x, value) rows into (y_axis, x_axis, matrix).

    The rows must cover a complete rectangular grid (the runner writes them
    that way); values are placed, never interpolated.
    """
    ys = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    if len(ys) * len(xs) != len(data):
        raise PlotError("heatmap rows do not form a complete grid")
    grid = np.full((len(ys), len(xs)), np.nan)
    yi = np.searchsorted(ys, data[:, 0])
    xi = np.searchsorted(xs, data[:, 1])
    grid[yi, xi] = data[:, 2]
    return ys, xs, grid


def _legend_labels(spec: FigureSpec) -> list:
    if spec.labels:
        if len(spec.labels) != len(spec.inputs):
            raise PlotError("labels must match inputs one-to-one")
        return list(spec.labels)
    return [os.path.splitext(os.path.basename(p))[0] for p in spec.inputs]


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output image path."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "heatmap":
                _, data = read_table(spec.inputs[0], "heatmap")
                ys, xs, grid = grid_heatmap(data)
                mesh = ax.pcolormesh(xs, ys, grid, shading="nearest")
                fig.colorbar(mesh, ax=ax, label="power (dB)")
            else:
                for path, label in zip(spec.inputs, _legend_labels(spec)):
                    _, data = read_table(path, spec.kind)
                    if spec.kind == "cdf":
                        ax.step(data[:, 0], data[:, 1], where="post", label=label)
                        ax.set_ylim(0.0, 1.02)
                    else:  # line, track
                        ax.plot(data[:, 0], data[:, 1], marker=".", label=label)
                if len(spec.inputs) > 1:
                    ax.legend()
            ax.set_xlabel(spec.x_label)
            ax.set_ylabel(spec.y_label)
            if spec.title:
                ax.set_title(spec.title)
            outdir = os.path.dirname(spec.output_path)
            if outdir:
                os.makedirs(outdir, exist_ok=True)
            fig.savefig(spec.output_path, metadata=_clean_metadata(spec.output_path))
        finally:
            plt.close(fig)
    return spec.output_path


def _clean_metadata(path: str) -> dict:
    """Strip everything time- or environment-dependent from image metadata."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        return {"Software": "simplot"}
    if ext == ".svg":
        return {"Date": None, "Creator": "simplot"}
    return {}

"""Read-only figure rendering for simulator CSV/manifest artifacts."""

from .figures import KINDS, FigureSpec, PlotError, grid_heatmap, read_table, render

__version__ = "0.1.0"

__all__ = ["KINDS", "FigureSpec", "PlotError", "grid_heatmap", "read_table",
           "render", "__version__"]

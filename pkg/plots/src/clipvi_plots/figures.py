"""Multi-panel log-log convergence figures from results CSVs.

Each input CSV becomes one panel; each method in a CSV becomes one curve
with a shaded band of one standard deviation across runs.  The file format
is the seven-column results schema written by the solver harness; it is
parsed here independently so figures can be produced from the CSV files
alone, without importing the solver package.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RESULTS_COLUMNS = [
    "method",
    "k",
    "mean_dist2_last",
    "std_dist2_last",
    "mean_dist2_avg",
    "std_dist2_avg",
    "mean_gamma",
]

MEASURES = ("last", "avg")

_YLABELS = {
    "last": r"mean squared distance to solution (last iterate)",
    "avg": r"mean squared distance to solution (averaged iterate)",
}

# Plotted quantity is the squared distance; square roots would halve every
# log-log slope without changing the ordering of the curves.
_FOOTNOTE = "y-axis: squared distance (square roots halve log-log slopes)"


@dataclass(frozen=True)
class FigureSpec:
    """What to plot: one panel per CSV, curves chosen by measure."""

    csv_paths: tuple
    out: str
    measure: str = "last"
    titles: tuple = None

    def __post_init__(self):
        if len(self.csv_paths) == 0:
            raise ValueError("csv_paths must name at least one results file")
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if self.titles is not None and len(self.titles) != len(self.csv_paths):
            raise ValueError(
                f"titles has {len(self.titles)} entries for {len(self.csv_paths)} panels"
            )


def read_results(path) -> dict:
    """Read one results CSV into per-method column arrays.

    Returns {method: {column: array}} preserving the order in which methods
    first appear.  Raises ValueError naming the first offending column when
    the header does not match the results schema.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty results file")
        if header != RESULTS_COLUMNS:
            missing = [c for c in RESULTS_COLUMNS if c not in header]
            extra = [c for c in header if c not in RESULTS_COLUMNS]
            bad = (missing + extra)[0]
            raise ValueError(
                f"{path}: unexpected results schema at column '{bad}' "
                f"(expected columns {RESULTS_COLUMNS})"
            )
        rows = list(reader)

    grouped = {}
    for i, row in enumerate(rows):
        if len(row) != len(RESULTS_COLUMNS):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected 7")
        method = row[0]
        bucket = grouped.setdefault(method, {c: [] for c in RESULTS_COLUMNS[1:]})
        try:
            bucket["k"].append(int(row[1]))
            for col, value in zip(RESULTS_COLUMNS[2:], row[2:]):
                bucket[col].append(float(value))
        except ValueError:
            raise ValueError(f"{path}: row {i + 2} has a non-numeric field") from None

    out = {}
    for method, cols in grouped.items():
        out[method] = {"k": np.asarray(cols["k"], dtype=np.int64)}
        for col in RESULTS_COLUMNS[2:]:
            out[method][col] = np.asarray(cols[col], dtype=float)
    return out


def _grid_shape(n_panels):
    # up to three panels side by side, then wrap; 4 panels become 2x2
    ncols = 2 if n_panels == 4 else min(n_panels, 3)
    nrows = math.ceil(n_panels / ncols)
    return nrows, ncols


def build_figure(spec: FigureSpec):
    """Assemble the figure without writing it; returns (fig, visible axes)."""
    panels = [read_results(p) for p in spec.csv_paths]
    titles = (
        list(spec.titles)
        if spec.titles is not None
        else [Path(p).stem for p in spec.csv_paths]
    )

    n = len(panels)
    nrows, ncols = _grid_shape(n)
    fig, grid = plt.subplots(
        nrows, ncols, figsize=(5.0 * ncols, 3.9 * nrows), squeeze=False
    )
    flat = grid.ravel()
    mean_col = f"mean_dist2_{spec.measure}"
    std_col = f"std_dist2_{spec.measure}"

    for ax, panel, title in zip(flat, panels, titles):
        for method, cols in panel.items():
            k = cols["k"]
            mean = cols[mean_col]
            std = cols[std_col]
            (line,) = ax.plot(k, mean, label=method, linewidth=1.4)
            # log scale cannot show zero; clamp the band floor, not the curve
            lower = np.maximum(mean - std, np.finfo(float).tiny)
            ax.fill_between(
                k, lower, mean + std, alpha=0.2, color=line.get_color(), linewidth=0
            )
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel("iteration k")
        ax.set_ylabel(_YLABELS[spec.measure])
        ax.grid(True, which="both", alpha=0.3)
        if panel:
            ax.legend(fontsize=8)
    for ax in flat[n:]:
        ax.set_visible(False)

    fig.text(0.5, 0.005, _FOOTNOTE, ha="center", fontsize=7, color="0.35")
    fig.tight_layout(rect=(0, 0.02, 1, 1))
    return fig, list(flat[:n])


def render(spec: FigureSpec):
    """Render the figure described by spec to spec.out; returns the path."""
    fig, _ = build_figure(spec)
    out = Path(spec.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, dpi=150)
    finally:
        plt.close(fig)
    return out

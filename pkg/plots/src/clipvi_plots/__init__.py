"""Convergence figure rendering for clipvi results CSVs."""

from .figures import MEASURES, RESULTS_COLUMNS, FigureSpec, build_figure, read_results, render

__all__ = [
    "MEASURES",
    "RESULTS_COLUMNS",
    "FigureSpec",
    "build_figure",
    "read_results",
    "render",
]

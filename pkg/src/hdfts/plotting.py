"""Static figures for reports. Every figure also has a plain CSV of the plotted data."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .panel import format_number  # noqa: E402

# no timestamps or version strings, so reruns produce identical files
_PNG_META = {"Software": None}

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)


def write_score_plot_data(path, horizons, series: dict) -> None:
    """Long-format ``horizon,metric,value`` rows for each named score series."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("horizon", "metric", "value"))
        for name, values in series.items():
            for h, v in zip(horizons, values):
                w.writerow((int(h), name, format_number(v)))


def plot_horizon_scores(path, horizons, series: dict, title: str = "") -> None:
    """Line chart of accuracy scores against forecast horizon."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, values in series.items():
            ax.plot(horizons, values, marker="o", label=name)
        ax.set_xlabel("horizon")
        ax.set_ylabel("score")
        ax.set_xticks(list(horizons))
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_forecast_section(path, grid_points, point, lower=None, upper=None, label="",
                          history=None) -> None:
    """Forecast curves for one section, one line per horizon, with optional bands.

    ``point``/``lower``/``upper`` are ``[H, J]``; ``history`` (``[T, J]``) is
    drawn in light grey underneath.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if history is not None:
            for curve in np.asarray(history):
                ax.plot(grid_points, curve, color="0.8", lw=0.6)
        colors = plt.cm.viridis(np.linspace(0, 0.9, len(point)))
        for h, curve in enumerate(point):
            ax.plot(grid_points, curve, color=colors[h], lw=1.2, label=f"h={h + 1}")
            if lower is not None and upper is not None:
                ax.fill_between(grid_points, lower[h], upper[h], color=colors[h], alpha=0.15, lw=0)
        ax.set_xlabel("u")
        ax.set_ylabel("value")
        if label:
            ax.set_title(label)
        if len(point) <= 10:
            ax.legend(ncol=2)
        _save(fig, path)


def plot_curves(path, grid_points, curves, labels=None, title="") -> None:
    """Generic overlay of a few curves (loadings, eigenfunctions)."""
    curves = np.atleast_2d(curves)
    labels = labels or [str(i + 1) for i in range(len(curves))]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for curve, lab in zip(curves, labels):
            ax.plot(grid_points, curve, label=lab)
        ax.axhline(0.0, color="0.5", lw=0.5)
        ax.set_xlabel("u")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)

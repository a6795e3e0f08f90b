"""Plot data as CSV plus a rendered PNG of the same series."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

# keep PNGs stable between runs
_PNG_META = {"Software": None}


def write_series_csv(path, x, series: dict, xname="x") -> Path:
    path = Path(path)
    names = list(series)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([xname, *names])
        for i, xi in enumerate(x):
            w.writerow([f"{float(xi):.17g}", *(f"{float(series[n][i]):.17g}" for n in names)])
    return path


def line_plot(out_dir, stem, x, series: dict, *, xlabel="x", ylabel="", logx=False, logy=False, title=None, png=True):
    """Write ``stem.csv`` and (optionally) ``stem.png`` into ``out_dir``; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_series_csv(out / f"{stem}.csv", x, series, xname=xlabel.split()[0] if xlabel else "x")]
    if png:
        with plt.rc_context(STYLE):
            fig, ax = plt.subplots()
            for name, y in series.items():
                ax.plot(x, y, label=name, marker="o" if len(x) < 20 else None, ms=3)
            if logx:
                ax.set_xscale("log")
            if logy:
                ax.set_yscale("log")
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            if len(series) > 1:
                ax.legend(frameon=False)
            fig.tight_layout()
            fig.savefig(out / f"{stem}.png", metadata=_PNG_META)
            plt.close(fig)
        paths.append(out / f"{stem}.png")
    return paths


def rate_plot(out_dir, stem, fit, *, xlabel="n", ylabel="error", png=True):
    """Log-log scatter of a RateFit with its fitted line."""
    x = np.asarray(fit.x)
    fitted = np.exp(fit.intercept) * x**fit.slope
    return line_plot(
        out_dir,
        stem,
        x,
        {"error": fit.errors, "fit": fitted},
        xlabel=xlabel,
        ylabel=ylabel,
        logx=True,
        logy=True,
        title=f"slope {fit.slope:.3f} +/- {fit.half_width:.3f}",
        png=png,
    )

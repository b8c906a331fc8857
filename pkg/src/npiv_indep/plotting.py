"""PNG figures for the CLI report path.

Everything renders through the Agg backend and is written next to the CSV
it illustrates. Nothing here is needed by the estimators.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_curves", "plot_trace", "plot_band", "plot_sample", "plot_rate"]

DPI = 110
# no version/date chunks so reruns give identical bytes
PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=PNG_META)
    plt.close(fig)
    return path


def plot_curves(path, grid, curves: Mapping[str, np.ndarray], truth=None,
                title: str = "", points: Optional[tuple] = None) -> Path:
    """Overlay named curves on one grid, optionally with the truth and data."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if points is not None:
        ax.scatter(points[0], points[1], s=4, c="0.75", label="data", rasterized=True)
    for name, vals in curves.items():
        ax.plot(grid, vals, lw=1.5, label=name)
    if truth is not None:
        ax.plot(grid, truth, "k--", lw=1.2, label="true")
    ax.set_xlabel("z")
    ax.set_ylabel(r"$\varphi(z)$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_trace(path, trace, n_stop: int, norm_after_stop: Optional[float] = None) -> Path:
    """Empirical squared norm per iteration on a log scale, stop marked."""
    trace = np.asarray(trace, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(trace.size), trace, lw=1.2)
    if norm_after_stop is not None:
        ax.semilogy([n_stop, n_stop + 1], [trace[n_stop], norm_after_stop], "r:", lw=1.2)
    ax.axvline(n_stop, color="r", lw=0.8, ls="--", label=f"$N_0$ = {n_stop}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("empirical squared norm")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_band(path, grid, mean, lo, hi, truth=None, title: str = "") -> Path:
    """Monte Carlo mean curve with its pointwise percentile band."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(grid, lo, hi, color="C0", alpha=0.25, lw=0, label="95% band")
    ax.plot(grid, mean, "C0", lw=1.5, label="mean")
    if truth is not None:
        ax.plot(grid, truth, "k--", lw=1.2, label="true")
    ax.set_xlabel("z")
    ax.set_ylabel(r"$\varphi(z)$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_sample(path, z, y, w, grid=None, truth=None) -> Path:
    """Scatter of ``y`` against ``z`` coloured by instrument category."""
    fig, ax = plt.subplots(figsize=(6, 4))
    w = np.asarray(w)
    for j in np.unique(w):
        m = w == j
        ax.scatter(np.asarray(z)[m], np.asarray(y)[m], s=4, label=f"w = {j}", rasterized=True)
    if truth is not None:
        ax.plot(grid, truth, "k--", lw=1.2, label="true")
    ax.set_xlabel("z")
    ax.set_ylabel("y")
    ax.legend(frameon=False, markerscale=3)
    return _save(fig, path)


def plot_rate(path, rows: Sequence[Mapping]) -> Path:
    """Median MISE against sample size on log-log axes."""
    n = np.array([r["n"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(n, [r["median_mise"] for r in rows], "o-", label="final")
    ax.loglog(n, [r["median_mise_initial"] for r in rows], "s--", label="initial")
    ax.set_xlabel("n")
    ax.set_ylabel("median MISE")
    ax.legend(frameon=False)
    return _save(fig, path)

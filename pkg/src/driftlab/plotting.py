"""Figures for the CLI report path, written next to the CSV/JSON outputs.

Rendering uses the non-interactive Agg backend and a fixed style so the
same data always produce the same picture.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "font.family": "serif",
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.direction": "out",
    "ytick.direction": "out",
    "lines.linewidth": 1.0,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "driftlab",
    "path.simplify": False,
}


def figure(width: float = 4.0, height: float | None = None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def _save(fig, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_moment_trace(trace, path) -> Path:
    """Mean of ``||G||^r`` against n with its confidence band and the two comparison windows."""
    with plt.rc_context(STYLE):
        fig, ax = figure()
        ax.fill_between(trace.n, trace.m - trace.half_width, trace.m + trace.half_width,
                        color="0.8", linewidth=0, label=f"{trace.confidence:.0%} band")
        ax.plot(trace.n, trace.m, color="k", label=f"r = {trace.r:g}")
        H = int(trace.n[-1])
        for lo, hi in ((H // 4, H // 2), ((3 * H) // 4, H)):
            ax.axvspan(lo, hi, color="tab:blue", alpha=0.08, linewidth=0)
        ax.set_xlabel("n")
        ax.set_ylabel(r"$E\,\|G_n(X_n)\|^r$")
        ax.set_title(f"verdict: {trace.verdict} (slope {trace.growth_exponent:.3f})")
        ax.legend(loc="best")
    return _save(fig, Path(path))


def plot_measure(measure, path, reference=None, label: str = "estimate") -> Path:
    """Bar chart of a one-dimensional measure, optionally against a reference."""
    with plt.rc_context(STYLE):
        fig, ax = figure()
        if measure.support and len(measure.support[0]) == 1:
            xs = np.array([s[0] for s in measure.support], dtype=float)
            ax.bar(xs, measure.weights, width=0.8, color="0.6", label=label)
            if reference is not None:
                rx = np.array([s[0] for s in reference.support], dtype=float)
                ax.plot(rx, reference.weights, "k.", label="oracle")
            ax.set_xlabel("state")
        else:
            ax.plot(np.sort(measure.weights)[::-1], "k-", label=label)
            ax.set_xlabel("state rank")
            ax.set_yscale("log")
        ax.set_ylabel("weight")
        ax.legend(loc="best")
    return _save(fig, Path(path))


def plot_tightness(rows: Sequence[dict], path, bound: Sequence[float] | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = figure()
        k = [r["kappa"] for r in rows]
        ax.plot(k, [max(r["outside_mass"], 1e-300) for r in rows], "ko-", label="outside mass")
        if bound is not None:
            ax.plot(k, bound, "k--", label="moment bound")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(r"$\kappa$")
        ax.set_ylabel(r"mass of $\|G\| > \kappa$")
        ax.legend(loc="best")
    return _save(fig, Path(path))


def plot_fit(fit, path, title: str = "") -> Path:
    """Log-log scatter of fit estimates with the fitted line (and the tail fit, if any)."""
    with plt.rc_context(STYLE):
        fig, ax = figure()
        for f, marker, name in ((fit, "o", "main"), (fit.tail, "s", "tail")):
            if f is None:
                continue
            n = np.asarray(f.n_grid, dtype=float)
            y = np.asarray(f.estimates, dtype=float)
            keep = y > 0
            ax.plot(n[keep], y[keep], marker, color="k", fillstyle="none", label=f"{name} estimates")
            ax.plot(n, np.exp(f.intercept) * n ** f.exponent, "k-", linewidth=0.8,
                    label=f"{name} slope {f.exponent:.2f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_title(title)
        ax.legend(loc="best")
    return _save(fig, Path(path))


def plot_brs_table(report, path) -> Path:
    """``F`` against ``-H A`` across a one-species region (first coordinate otherwise)."""
    with plt.rc_context(STYLE):
        fig, ax = figure()
        x = report.states[:, 0]
        ax.plot(x, report.F[:, 0], "k-", label="F")
        ax.plot(x, -report.H[:, 0] * report.A, "k--", label="-H A")
        ax.set_xlabel("state")
        ax.legend(loc="best")
    return _save(fig, Path(path))

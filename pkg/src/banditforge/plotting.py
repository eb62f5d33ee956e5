"""Figures written next to the CSV outputs (PNG, Agg backend)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import RegretCurves, ScalingFit  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def figsize(scale: float = 1.0) -> tuple[float, float]:
    width = 6.0 * scale
    return width, width * (math.sqrt(5.0) - 1.0) / 2.0


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def regret_curves(curves: dict[str, RegretCurves], path: str | Path) -> Path:
    """Mean cumulative regret with a 10-90% band, one line per agent."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        for name, c in curves.items():
            if len(c.t) == 0:
                continue
            (line,) = ax.plot(c.t, c.mean, lw=1.2, label=name)
            ax.fill_between(c.t, c.q10, c.q90, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("round $t$")
        ax.set_ylabel("cumulative regret")
        if curves:
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def scaling_plot(fits: dict[str, ScalingFit], path: str | Path,
                 xlabel: str = "horizon $n$") -> Path:
    """Log-log checkpoints with error bars and the fitted power law."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        for name, fit in fits.items():
            n = np.array([g[0] for g in fit.grid], dtype=float)
            mean = np.array([g[1] for g in fit.grid])
            se = np.array([g[2] for g in fit.grid])
            bars = ax.errorbar(n, mean, yerr=se, fmt="o", ms=3, capsize=2,
                               label=f"{name} (slope {fit.slope:.2f})")
            ax.plot(n, np.exp(fit.intercept) * n**fit.slope, lw=0.8,
                    color=bars[0].get_color())
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("mean cumulative regret")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)

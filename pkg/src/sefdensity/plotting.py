"""Figures for density curves, p-value QQ plots and power curves.

Everything renders off-screen with the Agg backend and is written to file;
the delimited tables remain the primary output.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def density_figure(gene: str, midpoints, curves: Sequence, labels: Sequence, path,
                   p_value: float | None = None) -> Path:
    """Fitted group densities of one gene on a shared axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for dens, label in zip(curves, labels):
            ax.plot(midpoints, dens, lw=1.5, label=str(label))
        title = gene if p_value is None else f"{gene}  (p = {p_value:.3g})"
        ax.set(xlabel="expression", ylabel="density", title=title)
        ax.legend()
        return _save(fig, path)


def qq_figure(expected, observed, path, title: str = "null p-values") -> Path:
    """-log10 observed vs expected p-value quantiles with the identity line.

    Both inputs are paired quantiles, as produced by ``Calibration``.
    """
    expected, observed = np.asarray(expected), np.asarray(observed)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        top = float(max(expected.max(initial=1.0), observed.max(initial=1.0)))
        ax.plot([0, top], [0, top], color="0.6", lw=1, ls="--")
        ax.scatter(expected, observed, s=8)
        ax.set(xlabel="expected -log10 p", ylabel="observed -log10 p", title=title)
        return _save(fig, path)


def power_figure(rows: Sequence, path, alpha: float | None = None) -> Path:
    """Rejection rate against scenario value, one line per method.

    ``rows`` are objects with ``method``, ``value`` and ``rate`` attributes.
    """
    by_method = defaultdict(list)
    for r in rows:
        by_method[r.method].append((r.value, r.rate))
    name = rows[0].scenario if rows and hasattr(rows[0], "scenario") else ""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for method, pts in by_method.items():
            x, y = zip(*sorted(pts))
            ax.plot(x, y, marker="o", ms=3, lw=1.2, label=method)
        if alpha is not None:
            ax.axhline(alpha, color="0.6", lw=1, ls=":")
        ax.set(xlabel="scenario value", ylabel="rejection rate", ylim=(-0.02, 1.02),
               title=name)
        ax.legend()
        return _save(fig, path)

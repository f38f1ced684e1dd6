"""SVG figure for the kappa fit (matplotlib, Agg backend)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def kappa_fit_svg(eps: Sequence[float], cost: Sequence[float], slope: float, intercept: float,
                  kappa: float, path: str) -> None:
    """Scatter of cost * eps^2 against -ln eps with the fitted line."""
    eps = np.asarray(eps, dtype=float)
    x = -np.log(eps)
    y = np.asarray(cost, dtype=float) * eps ** 2
    xs = np.linspace(x.min(), x.max(), 2)
    with plt.rc_context({"svg.hashsalt": "driftrack", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        ax.plot(x, y, "o", color="#1f4e79", label="simulated crossings")
        ax.plot(xs, slope * xs + intercept, "-", color="#c0392b",
                label=f"fit: slope {slope:.4g}, kappa_est {kappa:.4g}")
        ax.set_xlabel("-ln eps")
        ax.set_ylabel("cost * eps^2")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
